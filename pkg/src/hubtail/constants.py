"""Asymptotic constants of the edge-count upper tail.

The hub count ``k(a) = ceil(a / mu)``, the truncated mean
``phi(eta) = E[min(eta X, mu)]``, the hub scale ``eta(a)``, the prefactor
``K(a) = eta^(-k alpha) P(C(X_1^eta, ..., X_k^eta) >= a)`` and the rate
function ``I(x) = (alpha - 1) ceil(x)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from .errors import EtaInfiniteError, IntegerRatioError, UnsupportedDistributionError
from .streams import TAG_EXCEED, map_batches, plan_batches, reduce_sums, stream
from .weights import DiscreteGrid, Pareto, WeightDistribution

RATIO_TOL = 1e-12
ETA_TOL = 1e-12
EXCEED_BATCH = 1 << 16


@dataclass(frozen=True)
class AsymptoteParams:
    a: float
    mu: float
    k: int
    eta: float
    K_hat: float
    K_stderr: float
    trials: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def hubs_required(a: float, mu: float) -> tuple[int, bool]:
    """Return ``(ceil(a / mu), a / mu is an integer)``.

    Ratios within a relative ``1e-12`` of an integer count as integers.
    """
    if not (a > 0 and mu > 0):
        raise ValueError("a and mu must be positive")
    r = a / mu
    nearest = round(r)
    if nearest >= 1 and abs(r - nearest) <= RATIO_TOL * max(1.0, r):
        return int(nearest), True
    return math.ceil(r), False


def truncated_mean(d: WeightDistribution, eta):
    """phi(eta) = E[min(eta X, mu)], vectorised over ``eta``."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise ValueError("eta must be non-negative")
    mu = d.mean()
    if isinstance(d, Pareto):
        alpha, xmin = d.alpha, d.xmin
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(eta > 0, mu / np.where(eta > 0, eta, 1.0), np.inf)
            # E[X 1{X < c}] for c > xmin
            partial = alpha / (alpha - 1.0) * xmin**alpha * (xmin ** (1.0 - alpha) - c ** (1.0 - alpha))
            below = eta * partial + mu * (xmin / c) ** alpha
        out = np.where(c <= xmin, mu, np.where(eta == 0, 0.0, below))
    elif isinstance(d, DiscreteGrid):
        out = np.minimum(np.multiply.outer(eta, d.values), mu) @ d.probs
    else:
        raise UnsupportedDistributionError(type(d).__name__)
    return float(out) if out.ndim == 0 else out


def truncated_mean_quad(d: WeightDistribution, eta: float) -> float:
    """phi(eta) by adaptive quadrature of ``int_0^mu P(X > t / eta) dt``."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    if eta == 0:
        return 0.0
    mu = d.mean()
    kinks = [eta * v for v in _kinks(d) if 0 < eta * v < mu]
    val, _ = integrate.quad(
        lambda t: d.tail(t / eta), 0.0, mu, points=kinks or None, epsabs=1e-12, epsrel=1e-12, limit=500
    )
    return val


def _kinks(d):
    if isinstance(d, Pareto):
        return [d.xmin]
    if isinstance(d, DiscreteGrid):
        return list(d.values)
    return []


def _saturation(d: WeightDistribution) -> tuple[float, float]:
    """Return (smallest eta where phi stops growing, the value phi plateaus at)."""
    mu = d.mean()
    if isinstance(d, DiscreteGrid):
        positive = d.values[(d.values > 0) & (d.probs > 0)]
        smallest = float(positive[0])
    else:
        smallest = d.lower_endpoint()
    return mu / smallest, mu * d.tail(0.0)


def eta_for_target(d: WeightDistribution, target: float) -> float:
    """Smallest eta with phi(eta) >= target, by bisection to an absolute 1e-12."""
    if not target > 0:
        raise ValueError("target must be positive")
    eta_sat, plateau = _saturation(d)
    if target > plateau * (1 + RATIO_TOL):
        raise EtaInfiniteError(
            f"eta is infinite: phi never exceeds {plateau:g} < {target:g} "
            "(integer a/mu with weights reaching down to 0)"
        )
    if target >= plateau * (1 - RATIO_TOL):
        # phi is flat beyond eta_sat; return the start of the plateau
        return eta_sat
    hi = min(1.0, eta_sat)
    while truncated_mean(d, hi) < target:
        hi = min(2.0 * hi, eta_sat)
    lo = 0.0
    while hi - lo > ETA_TOL:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if truncated_mean(d, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def eta_of(d: WeightDistribution, a: float, k: int | None = None) -> float:
    """eta(a): smallest eta with (k - 1) mu + phi(eta) >= a."""
    if not a > 0:
        raise ValueError("a must be positive")
    mu = d.mean()
    if k is None:
        k, _ = hubs_required(a, mu)
    return eta_for_target(d, a - (k - 1) * mu)


def c_value(d: WeightDistribution, hub_values) -> float | np.ndarray:
    """C(x_1, ..., x_k) = sum_i phi(x_i); the last axis indexes hubs."""
    hub_values = np.asarray(hub_values, dtype=float)
    if hub_values.size == 0:
        raise ValueError("need at least one hub value")
    out = np.asarray(truncated_mean(d, hub_values)).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _require_power_tail(d: WeightDistribution) -> Pareto:
    if not isinstance(d, Pareto):
        raise UnsupportedDistributionError(
            f"{d.kind} weights have no tail index; K(a) needs the pure power law X^b"
        )
    return d


def estimate_exceed_prob(
    d: WeightDistribution,
    a: float,
    level: float,
    trials: int,
    seed: int,
    k: int | None = None,
    batch: int = EXCEED_BATCH,
    workers: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of P(C(X_1^level, ..., X_k^level) >= a) and its binomial stderr."""
    d = _require_power_tail(d)
    if not level > 0:
        raise ValueError("level must be positive")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if k is None:
        k, _ = hubs_required(a, d.mean())

    def run(b):
        rng = stream(seed, TAG_EXCEED, b.index)
        x = d.sample_conditional(level, rng, (b.size, k))
        return {"hits": float(np.count_nonzero(c_value(d, x) >= a))}

    hits = reduce_sums(map_batches(run, plan_batches(trials, batch), workers))["hits"]
    p = hits / trials
    return p, math.sqrt(p * (1.0 - p) / trials)


def k_of_a_constant(
    d: WeightDistribution,
    a: float,
    trials: int,
    seed: int,
    batch: int = EXCEED_BATCH,
    workers: int | None = None,
) -> AsymptoteParams:
    d = _require_power_tail(d)
    mu = d.mean()
    k, integer = hubs_required(a, mu)
    if integer:
        raise IntegerRatioError(
            f"a/mu = {a / mu:g} is an integer; the S_n asymptotics require a/mu non-integer"
        )
    eta = eta_of(d, a)
    p, se = estimate_exceed_prob(d, a, eta, trials, seed, batch=batch, workers=workers)
    scale = eta ** (-k * d.alpha)
    return AsymptoteParams(a=a, mu=mu, k=k, eta=eta, K_hat=scale * p, K_stderr=scale * se, trials=trials, seed=seed)


def rate_function(x: float, alpha: float) -> float:
    """I(x) = (alpha - 1) ceil(x) for x >= 0, +inf otherwise."""
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if x < 0:
        return math.inf
    return (alpha - 1.0) * math.ceil(x)


def sn_asymptote(
    d: WeightDistribution,
    a: float,
    n: int,
    params: AsymptoteParams | None = None,
    trials: int = 10**6,
    seed: int = 0,
) -> float:
    """K(a) (n P(X > n))^k(a), the asymptote of P(S_n > (mu^2/2 + a) n^2)."""
    k, integer = hubs_required(a, d.mean())
    if integer:
        raise IntegerRatioError(f"a/mu = {a / d.mean():g} is an integer; no S_n asymptote")
    base = n * d.tail(n)
    if base == 0:
        return 0.0
    if params is None:
        params = k_of_a_constant(d, a, trials, seed)
    return params.K_hat * base**k


def en_asymptote(
    d: WeightDistribution,
    a: float,
    n: int,
    params: AsymptoteParams | None = None,
    trials: int = 10**6,
    seed: int = 0,
) -> float:
    """K(mu a) (n P(X > n))^ceil(a), the asymptote of P(E_n > (mu/2 + a) n)."""
    if abs(a - round(a)) <= RATIO_TOL * max(1.0, a):
        raise IntegerRatioError(f"a = {a:g} is an integer; the E_n asymptotics require non-integer a")
    return sn_asymptote(d, d.mean() * a, n, params=params, trials=trials, seed=seed)
