"""Independent uniform priors on positive boxes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class UniformBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be 1-d arrays of equal length")
        if np.any(lo < 0) or np.any(hi <= lo):
            raise ValueError("need 0 <= lower < upper for every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def around(cls, center, factor: float = 2.0) -> "UniformBox":
        """Box [0, factor * center] per coordinate."""
        center = np.asarray(center, dtype=float)
        return cls(np.zeros_like(center), factor * center)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        shape = (self.dim,) if n is None else (n, self.dim)
        return self.lower + (self.upper - self.lower) * rng.random(shape)

    def contains(self, theta) -> bool:
        """Strictly positive coordinates inside the box (zero is excluded)."""
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta > 0) and np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def to_json(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class PositiveOrthant:
    """Improper positive uniform prior: any strictly positive vector."""

    dim: int

    def contains(self, theta) -> bool:
        return bool(np.all(np.asarray(theta, dtype=float) > 0))

    def to_json(self) -> dict:
        return {"positive": self.dim}
