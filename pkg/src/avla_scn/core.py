"""Shared primitives: box bounds, the black-box problem, seeded randomness, NFE counting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class StructuralError(ValueError):
    """Raised when vector or bounds shapes do not line up."""


class EvaluationError(RuntimeError):
    """A fitness oracle returned a non-finite value.

    The offending vector is kept on ``vector`` so callers can log or replay it.
    """

    def __init__(self, message: str, vector: np.ndarray, value: float = float("nan")):
        super().__init__(message)
        self.vector = np.array(vector, dtype=float, copy=True)
        self.value = value


@dataclass(frozen=True)
class Bounds:
    """Per-element box ``lower[j] <= x[j] <= upper[j]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel().copy()
        hi = np.asarray(self.upper, dtype=float).ravel().copy()
        if lo.shape != hi.shape:
            raise StructuralError(f"bounds length mismatch: {lo.size} lower vs {hi.size} upper")
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
            raise StructuralError("bounds must be finite")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise StructuralError(f"lower > upper at index {bad}: {lo[bad]} > {hi[bad]}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, lower: float, upper: float, dim: int) -> "Bounds":
        return cls(np.full(dim, float(lower)), np.full(dim, float(upper)))

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, v, atol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - atol) and np.all(v <= self.upper + atol))


@dataclass(frozen=True)
class Problem:
    """A bounded minimisation problem with a scalar fitness oracle.

    ``fitness`` maps a 1-D float array of length ``dim`` to a float.  Problems
    flagged ``stochastic`` (F7) may return different values for the same
    vector; every other problem must be deterministic.
    """

    name: str
    bounds: Bounds
    fitness: Callable[[np.ndarray], float]
    stochastic: bool = False
    f_min: Optional[float] = None

    @property
    def dim(self) -> int:
        return self.bounds.dim


class SeededRng:
    """Reproducible random stream backed by numpy's PCG64.

    Cauchy variates use the inverse CDF ``loc + scale * tan(pi * (u - 1/2))``
    on a single uniform draw, so a stream is fully determined by its uniforms
    and normals.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, size=None):
        return self.gen.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def cauchy(self, loc=0.0, scale=1.0, size=None):
        u = self.gen.random(size)
        return loc + scale * np.tan(np.pi * (u - 0.5))

    def integers(self, low, high=None, size=None):
        """Integers in ``[low, high)``."""
        return self.gen.integers(low, high, size)

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)``."""
        return self.gen.choice(n, size=k, replace=False)


@dataclass
class NfeCounter:
    count: int = 0


def as_vector(v, dim: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(v, dtype=float).ravel()
    if dim is not None and arr.size != dim:
        raise StructuralError(f"expected vector of length {dim}, got {arr.size}")
    return arr


def uniform_init(bounds: Bounds, rng: SeededRng, u: Optional[np.ndarray] = None) -> np.ndarray:
    """Random point ``lower + u * (upper - lower)`` with ``u`` uniform on [0, 1).

    ``u`` may be supplied directly to pin the draw.
    """
    if u is None:
        u = rng.uniform(bounds.dim)
    u = as_vector(u, bounds.dim)
    return bounds.lower + u * (bounds.upper - bounds.lower)


def clamp(v, bounds: Bounds) -> np.ndarray:
    """Project ``v`` onto the box."""
    v = as_vector(v, bounds.dim)
    return np.minimum(np.maximum(v, bounds.lower), bounds.upper)


def evaluate(problem: Problem, v, nfe: Optional[NfeCounter] = None) -> float:
    """Call the fitness oracle once, counting the call."""
    x = as_vector(v, problem.dim)
    value = float(problem.fitness(x))
    if nfe is not None:
        nfe.count += 1
    if not np.isfinite(value):
        raise EvaluationError(f"{problem.name}: non-finite fitness {value}", x, value)
    return value
