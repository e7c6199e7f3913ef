"""Rare-event estimators for the upper tails of S_n, M_n and E_n.

The naive estimator samples weight vectors directly. The planted estimator
forces the first ``k`` weights above ``eps * n`` and the rest below it, and
multiplies the hit frequency by ``P(N_{n,eps} = k) = C(n, k) p^k (1 - p)^(n - k)``
with ``p = P(X > eps n)``. Since the weights above and below the cut are
drawn from the exact conditional laws, this is an unbiased estimator of
``P(S_n > s; N_{n,eps} = k)`` at every finite ``n``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import gammaln
from scipy.stats import binomtest

from . import streams
from .constants import (
    AsymptoteParams,
    c_value,
    eta_of,
    hubs_required,
    k_of_a_constant,
    sn_asymptote,
)
from .errors import ConfigurationError, EtaInfiniteError, HubtailError, IntegerRatioError
from .graphstats import EDGE_CAP, edge_counts_rows, s_n_rows
from .weights import WeightDistribution

Z95 = 1.959963984540054
WILSON_BELOW = 30


@dataclass
class EstimatorConfig:
    method: str = "planted"
    trials: int = 100_000
    seed: int = 0
    eps: float | str = "auto"
    k_override: int | None = None
    batch: int = 1000
    workers: int | None = None
    total: bool = False
    remainder_trials: int | None = None
    edge_cap: int = EDGE_CAP

    def __post_init__(self):
        if self.method not in ("naive", "planted", "both"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.batch < 1:
            raise ConfigurationError("batch must be >= 1")
        if self.eps != "auto" and not (isinstance(self.eps, (int, float)) and self.eps > 0):
            raise ConfigurationError(f"eps must be 'auto' or a positive number, got {self.eps!r}")

    @property
    def n_remainder(self) -> int:
        if self.remainder_trials is None:
            return max(1, self.trials // 10)
        return self.remainder_trials


@dataclass
class TailEstimate:
    p_hat: float
    stderr: float
    ci95: tuple[float, float]
    trials: int
    hits_or_ess: float
    method: str
    components: dict[str, float] | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci95"] = list(self.ci95)
        return out


def _proportion(hits: float, trials: int, scale: float, method: str, **kw) -> TailEstimate:
    f = hits / trials
    se = math.sqrt(f * (1.0 - f) / trials)
    if hits < WILSON_BELOW:
        ci = binomtest(int(hits), trials).proportion_ci(0.95, method="wilson")
        lo, hi = float(ci.low), float(ci.high)
    else:
        lo, hi = max(0.0, f - Z95 * se), min(1.0, f + Z95 * se)
    lo, hi = min(lo, f), max(hi, f)
    return TailEstimate(
        p_hat=scale * f,
        stderr=scale * se,
        ci95=(scale * lo, scale * hi),
        trials=trials,
        hits_or_ess=float(hits),
        method=method,
        **kw,
    )


def _wilson_upper(hits: float, trials: int) -> float:
    return float(binomtest(int(hits), trials).proportion_ci(0.95, method="wilson").high)


def sn_threshold(d: WeightDistribution, n: int, a: float) -> float:
    mu = d.mean()
    return (mu * mu / 2 + a) * n * n


def planted_log_weight(n: int, k: int, p: float) -> float:
    """log P(Binomial(n, p) = k)."""
    if p <= 0.0:
        return -math.inf if k > 0 else 0.0
    if p >= 1.0:
        return 0.0 if k == n else -math.inf
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) + k * math.log(p) + (n - k) * math.log1p(-p))


def resolve_eps(d: WeightDistribution, a: float, cfg: EstimatorConfig) -> tuple[int, float, float | None]:
    """Return (k, eps, eta) for the S_n target ``a``; eta is None when undefined for an override k."""
    mu = d.mean()
    k = cfg.k_override if cfg.k_override is not None else hubs_required(a, mu)[0]
    if cfg.k_override is not None and a <= (k - 1) * mu:
        # k - 1 saturated hubs already reach a; eta is not defined
        eta = None
    else:
        try:
            eta = eta_of(d, a, k)
        except EtaInfiniteError:
            if cfg.k_override is None:
                raise
            eta = None
    if eta is None and cfg.eps == "auto":
        raise ConfigurationError(f"eta is undefined for k_override = {k} at a = {a:g}; pass an explicit eps")
    if cfg.eps == "auto":
        eps = eta / 2
    else:
        eps = float(cfg.eps)
        if eta is not None and not eps < eta:
            raise ConfigurationError(f"eps = {eps:g} must be below eta = {eta:.6g}")
    return k, eps, eta


def _draw_planted(d, n, k, thr, rng, size):
    parts = []
    if k:
        parts.append(d.sample_above(thr, rng, (size, k)))
    if n > k:
        parts.append(d.sample_at_most(thr, rng, (size, n - k)))
    return np.concatenate(parts, axis=1)


def _top_over_n(W, k):
    part = -np.partition(-W, k - 1, axis=1)[:, :k] if k < W.shape[1] else W.copy()
    return -np.sort(-part, axis=1) / W.shape[1]


def _planted_sn(d, n, k, eps, thresholds, cfg, keep_tops=False):
    """Hit counts of S_n > t for each threshold t under the planted scheme."""
    mu = d.mean()
    thr = eps * n

    def run(b):
        rng = streams.stream(cfg.seed, streams.TAG_PLANTED, n, b.index)
        S = s_n_rows(_draw_planted(d, n, k, thr, rng, b.size), mu)
        out = {f"h{i}": float(np.count_nonzero(S > t)) for i, t in enumerate(thresholds)}
        return out

    def run_tops(b):
        rng = streams.stream(cfg.seed, streams.TAG_PLANTED, n, b.index)
        W = _draw_planted(d, n, k, thr, rng, b.size)
        hit = s_n_rows(W, mu) > thresholds[0]
        return float(np.count_nonzero(hit)), _top_over_n(W[hit], k)

    plan = streams.plan_batches(cfg.trials, cfg.batch)
    if keep_tops:
        parts = streams.map_batches(run_tops, plan, cfg.workers)
        hits = sum(p[0] for p in parts)
        tops = np.concatenate([p[1] for p in parts]) if parts else np.empty((0, k))
        return {"h0": hits}, tops
    return streams.reduce_sums(streams.map_batches(run, plan, cfg.workers)), None


def _naive_split(d, n, k, eps, stat, cfg, trials, tag):
    """Naive hit counts of an event split by N_{n,eps} relative to k."""
    mu = d.mean()
    thr = eps * n

    def run(b):
        rng = streams.stream(cfg.seed, tag, n, b.index)
        W = d.sample(rng, (b.size, n))
        hit = stat(W, rng)
        N = np.count_nonzero(W > thr, axis=1)
        return {
            "below": float(np.count_nonzero(hit & (N < k))),
            "equal": float(np.count_nonzero(hit & (N == k))),
            "above": float(np.count_nonzero(hit & (N > k))),
        }

    return streams.reduce_sums(streams.map_batches(run, streams.plan_batches(trials, cfg.batch), cfg.workers))


def estimate_sn_tail_naive(d: WeightDistribution, n: int, a: float, cfg: EstimatorConfig) -> TailEstimate:
    """Plain Monte Carlo estimate of P(S_n > (mu^2/2 + a) n^2)."""
    if not a > 0:
        raise ConfigurationError("a must be positive")
    mu = d.mean()
    s = sn_threshold(d, n, a)

    def run(b):
        rng = streams.stream(cfg.seed, streams.TAG_NAIVE, n, b.index)
        S = s_n_rows(d.sample(rng, (b.size, n)), mu)
        return {"hits": float(np.count_nonzero(S > s))}

    hits = streams.reduce_sums(streams.map_batches(run, streams.plan_batches(cfg.trials, cfg.batch), cfg.workers))
    return _proportion(hits.get("hits", 0.0), cfg.trials, 1.0, "naive", extra={"threshold": s})


def _remainders(d, n, k, eps, stat, cfg, p_exceed):
    """Components for N < k and N > k: binomial bound plus a naive sub-estimate."""
    comps = {"N>k bound": min(1.0, (n * p_exceed) ** (k + 1))}
    R = cfg.n_remainder
    naive = None
    if R > 0:
        naive = _naive_split(d, n, k, eps, stat, cfg, R, streams.TAG_REMAINDER)
        comps["N<k estimate"] = naive["below"] / R
        comps["N<k bound"] = _wilson_upper(naive["below"], R)
        comps["N>k estimate"] = naive["above"] / R
    else:
        comps["N<k bound"] = math.nan
    return comps, naive, R


def _combine_total(est: TailEstimate, naive, R, method):
    other = naive["below"] + naive["above"]
    f = other / R
    se_r = math.sqrt(f * (1 - f) / R)
    p = est.p_hat + f
    se = math.hypot(est.stderr, se_r)
    lo, hi = est.ci95[0] + max(0.0, f - Z95 * se_r), est.ci95[1] + min(1.0, f + Z95 * se_r)
    return TailEstimate(
        p_hat=p,
        stderr=se,
        ci95=(min(lo, p), max(hi, p)),
        trials=est.trials + R,
        hits_or_ess=est.hits_or_ess + other,
        method=method,
        components=est.components,
        extra=est.extra,
    )


def estimate_sn_tail_planted(d: WeightDistribution, n: int, a: float, cfg: EstimatorConfig) -> TailEstimate:
    """Planted-hub estimate of P(S_n > (mu^2/2 + a) n^2; N_{n,eps} = k).

    With ``cfg.total`` the naive sub-estimate of the N != k part is added,
    giving an unbiased estimate of the full tail probability.
    """
    if not a > 0:
        raise ConfigurationError("a must be positive")
    k, eps, eta = resolve_eps(d, a, cfg)
    if k > n:
        raise ConfigurationError(f"k = {k} hubs do not fit in n = {n} vertices")
    s = sn_threshold(d, n, a)
    p = d.tail(eps * n)
    logw = planted_log_weight(n, k, p)
    weight = math.exp(logw) if logw > -math.inf else 0.0
    if weight > 0:
        counts, _ = _planted_sn(d, n, k, eps, [s], cfg)
        hits = counts.get("h0", 0.0)
    else:
        hits = 0.0
    mu = d.mean()
    comps, naive, R = _remainders(d, n, k, eps, lambda W, rng: s_n_rows(W, mu) > s, cfg, p)
    est = _proportion(
        hits,
        cfg.trials,
        weight,
        "planted",
        extra={"threshold": s, "k": k, "eps": eps, "eta": eta, "planted_weight": weight},
    )
    comps = {"N=k": est.p_hat, **comps}
    est.components = comps
    if cfg.total and naive is not None:
        return _combine_total(est, naive, R, "planted+total")
    return est


def estimate_mn_tail(d: WeightDistribution, n: int, a: float, cfg: EstimatorConfig) -> TailEstimate:
    """P(M_n > (mu/2 + a) n), which is the S_n tail at level mu a."""
    return estimate_sn_tail(d, n, d.mean() * a, cfg)


def estimate_sn_tail(d: WeightDistribution, n: int, a: float, cfg: EstimatorConfig) -> TailEstimate:
    if cfg.method == "naive":
        return estimate_sn_tail_naive(d, n, a, cfg)
    return estimate_sn_tail_planted(d, n, a, cfg)


def _ratio_stats(hE, hM, hEM, T):
    if hM == 0:
        return math.nan, math.nan
    r = hE / hM
    e, m, em = hE / T, hM / T, hEM / T
    var = (e * (1 - e) - 2 * r * (em - e * m) + r * r * m * (1 - m)) / (T * m * m)
    return r, math.sqrt(max(var, 0.0))


def estimate_en_tail(d: WeightDistribution, n: int, a: float, cfg: EstimatorConfig) -> TailEstimate:
    """Estimate P(E_n > (mu/2 + a) n) together with P(M_n > (mu/2 + a) n) on the same weights.

    Only the weights are importance sampled; edges are drawn exactly given
    the weights, so the likelihood ratio involves weights only.
    """
    if not a > 0:
        raise ConfigurationError("a must be positive")
    if n > cfg.edge_cap:
        raise ConfigurationError(f"n = {n} exceeds the edge-sampling cap {cfg.edge_cap}")
    mu = d.mean()
    t_edges = (mu / 2 + a) * n
    s = sn_threshold(d, n, mu * a)
    planted = cfg.method != "naive"
    if planted:
        k, eps, eta = resolve_eps(d, mu * a, cfg)
        p = d.tail(eps * n)
        logw = planted_log_weight(n, k, p)
        weight = math.exp(logw) if logw > -math.inf else 0.0
    else:
        k, eps, eta, weight = None, None, None, 1.0

    def run(b):
        if planted:
            rng = streams.stream(cfg.seed, streams.TAG_PLANTED, n, b.index)
            W = _draw_planted(d, n, k, eps * n, rng, b.size)
        else:
            rng = streams.stream(cfg.seed, streams.TAG_NAIVE, n, b.index)
            W = d.sample(rng, (b.size, n))
        hM = s_n_rows(W, mu) > s
        hE = edge_counts_rows(W, mu, rng, cfg.edge_cap) > t_edges
        return {
            "E": float(np.count_nonzero(hE)),
            "M": float(np.count_nonzero(hM)),
            "EM": float(np.count_nonzero(hE & hM)),
        }

    if weight > 0:
        plan = streams.plan_batches(cfg.trials, cfg.batch)
        c = streams.reduce_sums(streams.map_batches(run, plan, cfg.workers))
    else:
        c = {"E": 0.0, "M": 0.0, "EM": 0.0}
    label = "planted" if planted else "naive"
    mn = _proportion(c["M"], cfg.trials, weight, label)
    ratio, ratio_err = _ratio_stats(c["E"], c["M"], c["EM"], cfg.trials)
    extra = {
        "threshold": t_edges,
        "mn_p_hat": mn.p_hat,
        "mn_stderr": mn.stderr,
        "ratio": ratio,
        "ratio_err": ratio_err,
    }
    if planted:
        extra.update({"k": k, "eps": eps, "eta": eta, "planted_weight": weight})
    est = _proportion(c["E"], cfg.trials, weight, label, extra=extra)
    if planted:

        def stat(W, rng):
            return edge_counts_rows(W, mu, rng, cfg.edge_cap) > t_edges

        comps, naive, R = _remainders(d, n, k, eps, stat, cfg, p)
        est.components = {"N=k": est.p_hat, **comps}
        if cfg.total and naive is not None:
            return _combine_total(est, naive, R, "planted+total")
    return est


def estimate(d: WeightDistribution, n: int, a: float, cfg: EstimatorConfig, target: str = "sn") -> dict:
    """Dispatch on target and method; ``both`` runs the two estimators side by side."""
    fns = {"sn": estimate_sn_tail, "mn": estimate_mn_tail, "en": estimate_en_tail}
    if target not in fns:
        raise ConfigurationError(f"unknown target {target!r}")
    fn = fns[target]
    if cfg.method != "both":
        return {cfg.method: fn(d, n, a, cfg)}

    naive = fn(d, n, a, replace(cfg, method="naive"))
    planted = fn(d, n, a, replace(cfg, method="planted"))
    se = math.hypot(naive.stderr, planted.stderr)
    z = (naive.p_hat - planted.p_hat) / se if se > 0 else 0.0
    return {"naive": naive, "planted": planted, "z": z}


@dataclass
class HubLawSample:
    tuples: np.ndarray
    weights: np.ndarray
    ess: float
    trials: int
    eps: float

    @property
    def empty(self) -> bool:
        return self.tuples.shape[0] == 0


def hub_empirical_law(d: WeightDistribution, n: int, a: float, cfg: EstimatorConfig) -> HubLawSample:
    """Top-k weights / n of the planted trials where S_n exceeds its threshold.

    Weights are self-normalised importance weights. Under the planted scheme
    every trial carries the same likelihood ratio, so they are uniform, and
    the effective sample size equals the hit count.
    """
    k, eps, _ = resolve_eps(d, a, cfg)
    s = sn_threshold(d, n, a)
    _, tops = _planted_sn(d, n, k, eps, [s], cfg, keep_tops=True)
    m = tops.shape[0]
    if m == 0:
        return HubLawSample(tops, np.empty(0), 0.0, cfg.trials, eps)
    raw = np.full(m, math.exp(planted_log_weight(n, k, d.tail(eps * n))))
    w = raw / raw.sum()
    return HubLawSample(tops, w, float(1.0 / np.sum(w * w)), cfg.trials, eps)


@dataclass
class LimitLawSample:
    tuples: np.ndarray
    attempts: int
    accepted: int

    @property
    def acceptance(self) -> float:
        return self.accepted / self.attempts if self.attempts else math.nan


def limit_hub_law_sample(
    d: WeightDistribution,
    a: float,
    trials: int,
    seed: int,
    k: int | None = None,
    level: float | None = None,
    max_attempts: int | None = None,
    batch: int = 1 << 16,
) -> LimitLawSample:
    """Rejection samples of (X_1^eta, ..., X_k^eta) given C >= a, sorted descending."""
    mu = d.mean()
    if k is None:
        k, integer = hubs_required(a, mu)
        if integer:
            raise IntegerRatioError(f"a/mu = {a / mu:g} is an integer; the hub limit law is not available")
    if level is None:
        level = eta_of(d, a, k)
    if max_attempts is None:
        max_attempts = max(10**7, 100 * trials)
    chunks, accepted, attempts, i = [], 0, 0, 0
    while accepted < trials:
        if attempts >= max_attempts:
            raise HubtailError(
                f"accepted {accepted} of {attempts} proposals; the event C >= {a:g} looks impossible"
            )
        size = min(batch, max_attempts - attempts)
        rng = streams.stream(seed, streams.TAG_LIMIT_LAW, i)
        x = d.sample_conditional(level, rng, (size, k))
        ok = c_value(d, x) >= a
        chunks.append(x[ok])
        accepted += int(ok.sum())
        attempts += size
        i += 1
    tuples = -np.sort(-np.concatenate(chunks)[:trials], axis=1)
    return LimitLawSample(tuples, attempts, accepted)


def ks_distance(samples_a, samples_b, weights_a=None, weights_b=None) -> float:
    """Two-sample Kolmogorov-Smirnov statistic, optionally with sample weights."""
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")

    def ecdf(x, w, grid):
        order = np.argsort(x, kind="stable")
        x = x[order]
        w = np.ones(x.size) if w is None else np.asarray(w, dtype=float)[order]
        cum = np.concatenate(([0.0], np.cumsum(w)))
        return cum[np.searchsorted(x, grid, side="right")] / cum[-1]

    grid = np.unique(np.concatenate([a, b]))
    return float(np.max(np.abs(ecdf(a, weights_a, grid) - ecdf(b, weights_b, grid))))


def ks_by_coordinate(A: np.ndarray, B: np.ndarray, weights_a=None) -> list[float]:
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    return [ks_distance(A[:, j], B[:, j], weights_a=weights_a) for j in range(A.shape[1])]


CONVERGENCE_COLUMNS = ("n", "p_hat", "stderr", "asymptote", "ratio", "ratio_err")


def convergence_table(
    d: WeightDistribution,
    a: float,
    n_list,
    cfg: EstimatorConfig,
    params: AsymptoteParams | None = None,
    k_trials: int = 10**6,
) -> list[dict]:
    """Planted estimates at each n next to K(a) (n P(X > n))^k and their ratio."""
    k, integer = hubs_required(a, d.mean())
    if integer:
        raise IntegerRatioError(f"a/mu = {a / d.mean():g} is an integer; the S_n asymptotics require a/mu non-integer")
    rows = []
    for n in n_list:
        est = estimate_sn_tail_planted(d, n, a, cfg)
        if d.tail(n) > 0 and params is None:
            params = k_of_a_constant(d, a, k_trials, cfg.seed, workers=cfg.workers)
        asym = sn_asymptote(d, a, n, params=params) if d.tail(n) > 0 else 0.0
        if asym > 0:
            ratio = est.p_hat / asym
            rel = math.hypot(
                est.stderr / est.p_hat if est.p_hat > 0 else 0.0,
                params.K_stderr / params.K_hat if params.K_hat > 0 else 0.0,
            )
            ratio_err = ratio * rel if est.p_hat > 0 else est.stderr / asym
        else:
            ratio, ratio_err = math.nan, math.nan
        rows.append(
            {
                "n": n,
                "p_hat": est.p_hat,
                "stderr": est.stderr,
                "asymptote": asym,
                "ratio": ratio,
                "ratio_err": ratio_err,
            }
        )
    return rows
