"""Exact small-instance ground truth and bound verifiers.

Given the weights, E_n is a sum of independent Bernoulli(p_ij), i.e. Poisson
binomial; its law is computed exactly by convolution. Over a finite weight
grid, the laws of S_n and E_n follow by enumerating weight multisets with
their multinomial probabilities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom

from . import streams
from .errors import BoundViolationError, BudgetExceededError, ConfigurationError
from .graphstats import s_n_rows
from .weights import DiscreteGrid

PB_CAP = 4096
ENUM_BUDGET = 10**7
MAX_PAIRS = 66
BOUND_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class PoissonBinomialSpec:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        if p.size > PB_CAP:
            raise BudgetExceededError(f"{p.size} Bernoulli terms exceed the exact DP cap {PB_CAP}")
        if np.any((p < 0) | (p > 1)) or np.any(~np.isfinite(p)):
            raise ConfigurationError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "probs", p)

    @property
    def mean(self) -> float:
        return float(math.fsum(self.probs))

    def pmf(self) -> np.ndarray:
        return poisson_binomial_pmf(self.probs)


def poisson_binomial_pmf(probs) -> np.ndarray:
    """pmf of a sum of independent Bernoullis, by repeated convolution with (1 - p, p)."""
    pmf = np.ones(1)
    for p in np.asarray(probs, dtype=float):
        nxt = np.empty(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[-1] = 0.0
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def poisson_binomial_tail(spec: PoissonBinomialSpec, t: int) -> float:
    """P(sum B_i >= t)."""
    m = spec.probs.size
    if t <= 0:
        return 1.0
    if t > m:
        return 0.0
    pmf = spec.pmf()
    return float(min(1.0, max(0.0, math.fsum(pmf[t:]))))


def i_b(b: float) -> float:
    """I_B(b) = (1 + b) log(1 + b) - b."""
    if b <= -1:
        raise ValueError("I_B is defined for b > -1")
    return (1.0 + b) * math.log1p(b) - b


def chernoff_upper(mu_n: float, b: float) -> float:
    """Bound on P(sum B_i > (1 + b) mu_n)."""
    if mu_n < 0 or b <= 0:
        raise ValueError("need mu_n >= 0 and b > 0")
    return math.exp(-mu_n * i_b(b))


def chernoff_lower(mu_n: float, b: float) -> float:
    """Bound on P(sum B_i < (1 - b) mu_n), for 0 < b < 1."""
    if mu_n < 0 or not 0 < b < 1:
        raise ValueError("need mu_n >= 0 and 0 < b < 1")
    return math.exp(-mu_n * i_b(-b))


def _upper_exact(pmf: np.ndarray, level: float) -> float:
    # P(S > level) for integer-valued S
    first = math.floor(level) + 1
    return float(math.fsum(pmf[max(first, 0):]))


def _lower_exact(pmf: np.ndarray, level: float) -> float:
    # P(S < level)
    last = math.ceil(level) - 1
    return float(math.fsum(pmf[: max(last + 1, 0)]))


def chernoff_check(spec: PoissonBinomialSpec, b: float) -> dict[str, float]:
    """Exact upper/lower deviation probabilities next to their Chernoff bounds."""
    pmf = spec.pmf()
    mu_n = spec.mean
    out = {
        "upper_exact": _upper_exact(pmf, (1 + b) * mu_n),
        "upper_bound": chernoff_upper(mu_n, b),
    }
    if b < 1:
        out["lower_exact"] = _lower_exact(pmf, (1 - b) * mu_n)
        out["lower_bound"] = chernoff_lower(mu_n, b)
    return out


def binomial_bound_check(n: int, p: float, m: int) -> tuple[float, float]:
    """Return ((n p)^m, P(Binomial(n, p) >= m)); raises if the bound fails."""
    if not 0 <= p <= 1 or not 0 <= m <= n:
        raise ValueError("need 0 <= p <= 1 and 0 <= m <= n")
    np_ = n * p
    bound = math.inf if np_ > 1 and m * math.log(np_) > 700 else np_**m
    exact = 1.0 if m == 0 else float(binom.sf(m - 1, n, p))
    if bound < exact - BOUND_SLACK:
        raise BoundViolationError(f"(np)^m = {bound} < P(B >= m) = {exact} for n={n}, p={p}, m={m}")
    return bound, exact


def _multisets(d: DiscreteGrid, n: int):
    """All weight multisets of size n with their probabilities, in lexicographic order."""
    keep = d.probs > 0
    values, probs = d.values[keep], d.probs[keep]
    if float(d.values.size) ** n > ENUM_BUDGET:
        raise BudgetExceededError(f"{d.values.size}^{n} weight tuples exceed the enumeration budget {ENUM_BUDGET}")
    idx = np.array(list(itertools.combinations_with_replacement(range(values.size), n)), dtype=np.int64)
    counts = np.zeros((idx.shape[0], values.size))
    np.add.at(counts, (np.repeat(np.arange(idx.shape[0]), n), idx.ravel()), 1.0)
    logp = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1) + counts @ np.log(probs)
    return values[idx], np.exp(logp)


def exact_sn_tail_grid(
    d: DiscreteGrid,
    n: int,
    threshold: float,
    eps: float | None = None,
    hub_count: int | None = None,
) -> float:
    """Exact P(S_n > threshold), optionally jointly with N_{n,eps} = hub_count."""
    if not isinstance(d, DiscreteGrid):
        raise ConfigurationError("exhaustive enumeration needs a grid distribution")
    W, prob = _multisets(d, n)
    hit = s_n_rows(W, d.mean()) > threshold
    if hub_count is not None:
        if eps is None:
            raise ValueError("hub_count needs eps")
        hit &= np.count_nonzero(W > eps * n, axis=1) == hub_count
    return float(min(1.0, math.fsum(prob[hit])))


def pair_probs(w: np.ndarray, mu: float) -> np.ndarray:
    n = w.size
    i, j = np.triu_indices(n, k=1)
    return np.minimum(w[i] * w[j] / (mu * n), 1.0)


def exact_en_tail_small(d: DiscreteGrid, n: int, t: int) -> float:
    """Exact P(E_n > t) = sum_w P(w) P(PoissonBinomial(p_ij(w)) >= t + 1)."""
    if not isinstance(d, DiscreteGrid):
        raise ConfigurationError("exhaustive enumeration needs a grid distribution")
    if n * (n - 1) // 2 > MAX_PAIRS:
        raise BudgetExceededError(f"n = {n} has more than {MAX_PAIRS} vertex pairs")
    if t < 0:
        return 1.0
    if t >= n * (n - 1) // 2:
        return 0.0
    W, prob = _multisets(d, n)
    mu = d.mean()
    terms = [p * poisson_binomial_tail(PoissonBinomialSpec(pair_probs(w, mu)), t + 1) for w, p in zip(W, prob)]
    return float(min(1.0, math.fsum(terms)))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_specs(rng: np.random.Generator, count: int, max_len: int = 200):
    for _ in range(count):
        m = int(rng.integers(1, max_len + 1))
        shape = rng.choice(["uniform", "small", "mixed"])
        if shape == "uniform":
            p = rng.random(m)
        elif shape == "small":
            p = rng.random(m) * 0.05
        else:
            p = np.where(rng.random(m) < 0.2, 1.0, rng.random(m) * 0.3)
        yield PoissonBinomialSpec(p)


def check_chernoff(seed: int = 0, instances: int = 1000) -> CheckResult:
    rng = streams.stream(seed, streams.TAG_ORACLE, 1)
    failures = 0
    total = 0
    for spec in _random_specs(rng, instances):
        for b in (0.1, 0.5, 1.0):
            r = chernoff_check(spec, b)
            total += 1
            failures += r["upper_bound"] < r["upper_exact"] - BOUND_SLACK
        for b in (0.1, 0.5, 0.9):
            r = chernoff_check(spec, b)
            total += 1
            failures += r["lower_bound"] < r["lower_exact"] - BOUND_SLACK
    return CheckResult("chernoff-dominance", failures == 0, f"{total - failures}/{total} comparisons dominated")


def check_binomial(seed: int = 0, instances: int = 1000) -> CheckResult:
    rng = streams.stream(seed, streams.TAG_ORACLE, 2)
    failures = 0
    for _ in range(instances):
        n = int(rng.integers(1, 500))
        p = float(rng.random() ** 3)
        m = int(rng.integers(0, n + 1))
        try:
            binomial_bound_check(n, p, m)
        except BoundViolationError:
            failures += 1
    return CheckResult("binomial-dominance", failures == 0, f"{instances - failures}/{instances} instances dominated")


def check_pmf(seed: int = 0, instances: int = 200) -> CheckResult:
    rng = streams.stream(seed, streams.TAG_ORACLE, 3)
    worst = 0.0
    monotone = True
    perm_gap = 0.0
    for spec in _random_specs(rng, instances):
        pmf = spec.pmf()
        worst = max(worst, abs(math.fsum(pmf) - 1.0))
        tails = np.cumsum(pmf[::-1])[::-1]
        monotone &= bool(np.all(np.diff(tails) <= 1e-15))
        shuffled = poisson_binomial_pmf(rng.permutation(spec.probs))
        perm_gap = max(perm_gap, float(np.max(np.abs(shuffled - pmf))))
    ok = worst <= 1e-12 and monotone and perm_gap <= 1e-12
    return CheckResult(
        "poisson-binomial-pmf", ok, f"max |sum-1| = {worst:.2e}, permutation gap = {perm_gap:.2e}, tail monotone = {monotone}"
    )


def check_binomial_reduction() -> CheckResult:
    """Equal weights make every p_ij equal, so E_n is exactly binomial."""
    n, c = 6, 1.5
    d = DiscreteGrid(np.array([c]), np.array([1.0]))
    pairs = n * (n - 1) // 2
    p = min(c * c / (c * n), 1.0)
    gap = max(abs(exact_en_tail_small(d, n, t) - float(binom.sf(t, pairs, p))) for t in range(-1, pairs + 1))
    return CheckResult("equal-weight-binomial", gap <= 1e-12, f"max gap = {gap:.2e}")


def check_enumeration() -> CheckResult:
    d = DiscreteGrid(np.array([1.0, 5.0]), np.array([0.5, 0.5]))
    n = 4
    cap = d.mean() * n * n * (n - 1) / 2
    ok = exact_sn_tail_grid(d, n, -1.0) == 1.0 and exact_sn_tail_grid(d, n, cap) == 0.0
    # total probability over a threshold below every S_n, split by hub count
    parts = sum(exact_sn_tail_grid(d, n, -1.0, eps=0.5, hub_count=h) for h in range(n + 1))
    ok &= abs(parts - 1.0) <= 1e-12
    return CheckResult("grid-enumeration", ok, f"hub-count split sums to {parts:.15f}")


def run_checks(which: str = "all", seed: int = 0) -> list[CheckResult]:
    checks = {
        "bounds": lambda: [check_chernoff(seed), check_binomial(seed)],
        "pmf": lambda: [check_pmf(seed)],
        "enumeration": lambda: [check_binomial_reduction(), check_enumeration()],
    }
    if which == "all":
        return [r for fn in checks.values() for r in fn()]
    if which not in checks:
        raise ConfigurationError(f"unknown check {which!r}; choose from all, {', '.join(checks)}")
    return checks[which]()
