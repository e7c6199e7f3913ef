"""Vertex weight laws and their exact samplers.

Two laws are supported: ``Pareto`` (constant slowly varying part, so
``P(X > x) = (xmin / x)**alpha`` above ``xmin``) and ``DiscreteGrid``, a finite
law used by the exhaustive oracles.

All samplers are inverse-CDF transforms of ``rng.random()``, so a draw is a
deterministic function of the stream position.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UnsupportedDistributionError


class WeightDistribution:
    """Common interface of the weight laws."""

    kind: str

    def tail(self, x):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def lower_endpoint(self) -> float:
        raise NotImplementedError

    def isf(self, u):
        """Inverse survival function: smallest x with P(X > x) < u, for u in (0, 1]."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        return self.isf(1.0 - rng.random(size))

    def sample_conditional(self, b: float, rng: np.random.Generator, size=None):
        raise UnsupportedDistributionError(
            f"{self.kind} weights carry no tail index; the pure power law X^b is undefined"
        )

    def sample_above(self, threshold: float, rng: np.random.Generator, size=None):
        """Draw from the law of X given X > threshold."""
        raise NotImplementedError

    def sample_at_most(self, threshold: float, rng: np.random.Generator, size=None):
        """Draw from the law of X given X <= threshold."""
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Pareto(WeightDistribution):
    alpha: float
    xmin: float = 1.0
    kind: str = field(default="pareto", init=False)

    def __post_init__(self):
        if not (self.alpha > 1.0 and math.isfinite(self.alpha)):
            raise ConfigurationError(f"pareto alpha must exceed 1 (finite mean), got {self.alpha}")
        if not (self.xmin > 0.0 and math.isfinite(self.xmin)):
            raise ConfigurationError(f"pareto xmin must be positive, got {self.xmin}")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(x <= self.xmin, 1.0, (self.xmin / np.maximum(x, self.xmin)) ** self.alpha)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return self.alpha * self.xmin / (self.alpha - 1.0)

    def lower_endpoint(self) -> float:
        return self.xmin

    def isf(self, u):
        u = np.asarray(u, dtype=float)
        out = self.xmin * u ** (-1.0 / self.alpha)
        return float(out) if out.ndim == 0 else out

    def sample_conditional(self, b: float, rng: np.random.Generator, size=None):
        """Draw from the pure power law with ``P(X > x) = (x / b)**-alpha`` on ``[b, inf)``."""
        if b <= 0:
            raise ValueError("b must be positive")
        return b * (1.0 - rng.random(size)) ** (-1.0 / self.alpha)

    def sample_above(self, threshold: float, rng: np.random.Generator, size=None):
        lo = max(threshold, self.xmin)
        return lo * (1.0 - rng.random(size)) ** (-1.0 / self.alpha)

    def sample_at_most(self, threshold: float, rng: np.random.Generator, size=None):
        if threshold < self.xmin:
            raise ValueError(f"P(X <= {threshold}) = 0 for xmin = {self.xmin}")
        mass = 1.0 - self.tail(threshold)
        return self.xmin * (1.0 - rng.random(size) * mass) ** (-1.0 / self.alpha)

    def describe(self) -> str:
        return f"pareto:alpha={self.alpha!r},xmin={self.xmin!r}"


@dataclass(frozen=True, eq=False)
class DiscreteGrid(WeightDistribution):
    values: np.ndarray
    probs: np.ndarray
    kind: str = field(default="grid", init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise ConfigurationError("grid values and probs must be equal-length non-empty lists")
        if np.any(values < 0):
            raise ConfigurationError("grid values must be non-negative")
        if np.any(np.diff(values) <= 0):
            raise ConfigurationError("grid values must be sorted ascending and distinct")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigurationError("grid probs must be non-negative and sum to 1")
        if float(values @ probs) <= 0:
            raise ConfigurationError("grid mean must be positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cum", np.cumsum(probs))

    def __eq__(self, other):
        return (
            isinstance(other, DiscreteGrid)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self):
        return hash((self.values.tobytes(), self.probs.tobytes()))

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        # P(X > x) = 1 - P(X <= x); index of the first value strictly above x
        idx = np.searchsorted(self.values, x, side="right")
        below = np.concatenate(([0.0], self._cum))[idx]
        out = np.clip(1.0 - below, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return float(self.values @ self.probs)

    def lower_endpoint(self) -> float:
        return float(self.values[np.argmax(self.probs > 0)])

    def _quantile(self, q, values, cum):
        idx = np.searchsorted(cum, q, side="right")
        out = values[np.minimum(idx, values.size - 1)]
        return float(out) if np.ndim(out) == 0 else out

    def isf(self, u):
        return self._quantile(1.0 - np.asarray(u, dtype=float), self.values, self._cum)

    def sample(self, rng: np.random.Generator, size=None):
        return self._quantile(rng.random(size), self.values, self._cum)

    def _restricted(self, mask):
        p = np.where(mask, self.probs, 0.0)
        total = p.sum()
        if total <= 0:
            raise ValueError("conditioning event has probability zero")
        return np.cumsum(p / total)

    def sample_above(self, threshold: float, rng: np.random.Generator, size=None):
        return self._quantile(rng.random(size), self.values, self._restricted(self.values > threshold))

    def sample_at_most(self, threshold: float, rng: np.random.Generator, size=None):
        return self._quantile(rng.random(size), self.values, self._restricted(self.values <= threshold))

    def describe(self) -> str:
        vals = ",".join(repr(float(v)) for v in self.values)
        probs = ",".join(repr(float(p)) for p in self.probs)
        return f"grid:values={vals};probs={probs}"


def tail(d: WeightDistribution, x):
    return d.tail(x)


def mean(d: WeightDistribution) -> float:
    return d.mean()


def lower_endpoint(d: WeightDistribution) -> float:
    return d.lower_endpoint()


def sample(d: WeightDistribution, rng: np.random.Generator, size=None):
    return d.sample(rng, size)


def sample_conditional(d: WeightDistribution, b: float, rng: np.random.Generator, size=None):
    return d.sample_conditional(b, rng, size)


_PARETO_RE = re.compile(r"^pareto:(.*)$")
_GRID_RE = re.compile(r"^grid:(.*)$")


def parse_distribution(text: str) -> WeightDistribution:
    """Parse ``pareto:alpha=2.0,xmin=1.0`` or ``grid:values=0,1,3;probs=0.25,0.5,0.25``."""
    text = text.strip()
    if m := _PARETO_RE.match(text):
        params = {}
        for item in filter(None, m.group(1).split(",")):
            key, _, val = item.partition("=")
            params[key.strip()] = float(val)
        unknown = set(params) - {"alpha", "xmin"}
        if unknown or "alpha" not in params:
            raise ConfigurationError(f"bad pareto spec {text!r}")
        return Pareto(alpha=params["alpha"], xmin=params.get("xmin", 1.0))
    if m := _GRID_RE.match(text):
        params = {}
        for item in filter(None, m.group(1).split(";")):
            key, _, val = item.partition("=")
            params[key.strip()] = [float(v) for v in val.split(",")]
        if set(params) != {"values", "probs"}:
            raise ConfigurationError(f"bad grid spec {text!r}")
        return DiscreteGrid(np.array(params["values"]), np.array(params["probs"]))
    raise ConfigurationError(f"unknown distribution spec {text!r}")
