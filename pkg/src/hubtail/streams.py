"""Counter-based random streams and deterministic trial partitioning.

Every batch of trials owns a Philox generator keyed by ``(seed, tag, batch_id)``.
Batches are fixed by ``(trials, batch)`` alone, so the numbers drawn do not
depend on how many workers process them.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

# Domain-separation tags, so distinct estimators never share a stream.
TAG_WEIGHTS = 1
TAG_EXCEED = 2
TAG_NAIVE = 3
TAG_PLANTED = 4
TAG_REMAINDER = 5
TAG_LIMIT_LAW = 6
TAG_EDGES = 7
TAG_ORACLE = 8


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator identified by ``seed`` and an integer key path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Batch:
    index: int
    start: int
    size: int


def plan_batches(trials: int, batch: int) -> list[Batch]:
    if trials < 0:
        raise ValueError("trials must be non-negative")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    return [
        Batch(i, start, min(batch, trials - start))
        for i, start in enumerate(range(0, trials, batch))
    ]


def default_workers() -> int:
    return int(os.environ.get("HUBTAIL_WORKERS", "1"))


def map_batches(fn: Callable[[Batch], T], plan: Sequence[Batch], workers: int | None = None) -> list[T]:
    """Apply ``fn`` to every batch; results come back in plan order."""
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(plan) <= 1:
        return [fn(b) for b in plan]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, plan))


def reduce_sums(parts: Iterable[dict[str, float]]) -> dict[str, float]:
    """Sum per-batch accumulators key by key, in plan order."""
    out: dict[str, float] = {}
    for part in parts:
        for key, value in part.items():
            out[key] = out.get(key, 0.0) + value
    return out
