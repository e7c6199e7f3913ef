"""Weight vectors, the truncated pair sum S_n, and sampled edge counts.

``S_n = sum_{i<j} min(w_i w_j, mu n)``. Splitting the weights at
``T = sqrt(mu n)`` makes this cheap: two weights at most ``T`` never hit the
cap, two weights above ``T`` always do, and a large weight ``w_i`` against a
small ``w_j`` is capped exactly when ``w_j > mu n / w_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import BudgetExceededError
from .weights import WeightDistribution

EDGE_CAP = 8192
_SCAN_LIMIT = 32
_BLOCK_DOUBLES = 1 << 21


@dataclass(frozen=True, eq=False)
class WeightVector:
    w: np.ndarray
    mu: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weight vector must be one-dimensional with n >= 1")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class GraphSummary:
    n: int
    S_n: float
    M_n: float
    E_n: int | None
    N_eps: int
    eps: float
    top_weights: tuple[float, ...]


def sample_weights(d: WeightDistribution, n: int, rng: np.random.Generator) -> WeightVector:
    if n < 1:
        raise ValueError("n must be >= 1")
    return WeightVector(np.asarray(d.sample(rng, n), dtype=float), d.mean())


def s_n(wv: WeightVector) -> float:
    """Exact S_n in O(n log n) via sorting and prefix sums."""
    w = np.sort(wv.w)
    mun = wv.mu * wv.n
    split = np.searchsorted(w, math.sqrt(mun), side="right")
    small, large = w[:split], w[split:]
    m = large.size
    total = 0.5 * (math.fsum(small) ** 2 - math.fsum(small * small))
    total += mun * m * (m - 1) / 2
    if m:
        prefix = np.concatenate(([0.0], np.cumsum(small)))
        # small weights above mu n / w_i are capped against w_i
        cut = np.searchsorted(small, mun / large, side="right")
        total += math.fsum(large * prefix[cut]) + mun * float(np.sum(small.size - cut))
    return total


def m_n(wv: WeightVector) -> float:
    return s_n(wv) / (wv.mu * wv.n)


@nb.njit(cache=True, nogil=True)
def _row_sn(w, mun):
    n = w.shape[0]
    thr = math.sqrt(mun)
    s = 0.0
    cs = 0.0
    q = 0.0
    cq = 0.0
    m = 0
    for i in range(n):
        x = w[i]
        if x > thr:
            m += 1
        else:
            # Kahan accumulation of the sum and the sum of squares
            y = x - cs
            t = s + y
            cs = (t - s) - y
            s = t
            y2 = x * x - cq
            t2 = q + y2
            cq = (t2 - q) - y2
            q = t2
    total = 0.5 * (s * s - q) + mun * m * (m - 1) / 2.0
    if m == 0:
        return total
    large = np.empty(m)
    small = np.empty(n - m)
    a = 0
    b = 0
    for i in range(n):
        if w[i] > thr:
            large[a] = w[i]
            a += 1
        else:
            small[b] = w[i]
            b += 1
    if m <= _SCAN_LIMIT:
        for a in range(m):
            cut = mun / large[a]
            acc = 0.0
            cnt = 0
            for b in range(n - m):
                if small[b] <= cut:
                    acc += small[b]
                else:
                    cnt += 1
            total += large[a] * acc + mun * cnt
    else:
        small.sort()
        prefix = np.empty(n - m + 1)
        prefix[0] = 0.0
        for b in range(n - m):
            prefix[b + 1] = prefix[b] + small[b]
        for a in range(m):
            c = np.searchsorted(small, mun / large[a], side="right")
            total += large[a] * prefix[c] + mun * (n - m - c)
    return total


@nb.njit(cache=True, nogil=True)
def _rows_sn(W, mun):
    out = np.empty(W.shape[0])
    for r in range(W.shape[0]):
        out[r] = _row_sn(W[r], mun)
    return out


def s_n_rows(W: np.ndarray, mu: float) -> np.ndarray:
    """S_n for every row of a (trials, n) weight matrix."""
    W = np.ascontiguousarray(W, dtype=float)
    return _rows_sn(W, mu * W.shape[1])


@nb.njit(cache=True, nogil=True)
def _count_edges(w, mun, u):
    n = w.shape[0]
    k = 0
    e = 0
    for i in range(n):
        wi = w[i] / mun
        for j in range(i + 1, n):
            if u[k] < wi * w[j]:
                e += 1
            k += 1
    return e


def sample_edge_count(wv: WeightVector, rng: np.random.Generator, cap: int = EDGE_CAP) -> int:
    """One draw of E_n given the weights: one uniform per pair, pairs in (i, j) lexicographic order."""
    n = wv.n
    if n > cap:
        raise BudgetExceededError(
            f"n={n} exceeds the exact edge-sampling cap {cap}; use the S_n/M_n estimators instead"
        )
    u = rng.random(n * (n - 1) // 2)
    return int(_count_edges(wv.w, wv.mu * n, u))


@nb.njit(cache=True, nogil=True)
def _count_edges_block(W, mun, U):
    out = np.empty(W.shape[0], dtype=np.int64)
    for r in range(W.shape[0]):
        out[r] = _count_edges(W[r], mun, U[r])
    return out


def edge_counts_rows(W: np.ndarray, mu: float, rng: np.random.Generator, cap: int = EDGE_CAP) -> np.ndarray:
    """One E_n draw per row.

    Uniforms are drawn in row blocks; a (rows, pairs) block consumes the
    stream exactly like ``rows`` consecutive ``sample_edge_count`` calls.
    """
    W = np.ascontiguousarray(W, dtype=float)
    trials, n = W.shape
    if n > cap:
        raise BudgetExceededError(
            f"n={n} exceeds the exact edge-sampling cap {cap}; use the S_n/M_n estimators instead"
        )
    pairs = n * (n - 1) // 2
    out = np.empty(trials, dtype=np.int64)
    if pairs == 0:
        out[:] = 0
        return out
    step = max(1, _BLOCK_DOUBLES // pairs)
    for r in range(0, trials, step):
        block = W[r : r + step]
        out[r : r + step] = _count_edges_block(block, mu * n, rng.random((block.shape[0], pairs)))
    return out


def hub_count(wv: WeightVector, eps: float) -> int:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return int(np.count_nonzero(wv.w > eps * wv.n))


def centered_edges(E_n, n, mu):
    return E_n / n - mu / 2


def summarize(wv: WeightVector, eps: float, top: int = 2, E_n: int | None = None) -> GraphSummary:
    s = s_n(wv)
    k = min(top, wv.n)
    tops = np.sort(wv.w)[::-1][:k] / wv.n
    return GraphSummary(
        n=wv.n,
        S_n=s,
        M_n=s / (wv.mu * wv.n),
        E_n=E_n,
        N_eps=hub_count(wv, eps),
        eps=eps,
        top_weights=tuple(float(t) for t in tops),
    )
