"""Input distributions: independent products of 1-D marginals.

The input vector x is distributed according to a joint density f_X that
factorizes over coordinates. Only normal and uniform marginals appear in the
benchmark problems, so only those are supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngStream

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Marginal:
    """One coordinate's distribution: ``normal(mean, std)`` or ``uniform(lo, hi)``."""

    kind: str
    a: float
    b: float

    def __post_init__(self) -> None:
        if self.kind == "normal":
            if self.b <= 0:
                raise ValueError(f"normal std must be positive, got {self.b}")
        elif self.kind == "uniform":
            if self.b <= self.a:
                raise ValueError(f"uniform needs hi > lo, got [{self.a}, {self.b}]")
        else:
            raise ValueError(f"unknown marginal kind {self.kind!r}")

    @staticmethod
    def normal(mean: float = 0.0, std: float = 1.0) -> Marginal:
        return Marginal("normal", float(mean), float(std))

    @staticmethod
    def uniform(lo: float, hi: float) -> Marginal:
        return Marginal("uniform", float(lo), float(hi))

    @property
    def std(self) -> float:
        """Standard deviation; used to scale proposal widths."""
        if self.kind == "normal":
            return self.b
        return (self.b - self.a) / math.sqrt(12.0)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        """Elementwise log-density; -inf outside the support."""
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            z = (x - self.a) / self.b
            return -0.5 * z * z - _LOG_SQRT_2PI - math.log(self.b)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, -math.log(self.b - self.a), -np.inf)

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "normal":
            return self.a + self.b * gen.standard_normal(n)
        return gen.uniform(self.a, self.b, size=n)


@dataclass(frozen=True)
class JointInputDistribution:
    """Independent product of marginals; the density f_X of the input vector."""

    marginals: tuple[Marginal, ...]

    def __post_init__(self) -> None:
        if len(self.marginals) < 1:
            raise ValueError("need at least one marginal")
        object.__setattr__(self, "marginals", tuple(self.marginals))

    @staticmethod
    def standard_normal(d: int) -> JointInputDistribution:
        return JointInputDistribution(tuple(Marginal.normal() for _ in range(d)))

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def stds(self) -> np.ndarray:
        return np.array([m.std for m in self.marginals])

    def log_density(self, x: np.ndarray) -> np.ndarray | float:
        """log f_X at one point (shape (d,)) or a batch (shape (n, d)).

        Independence makes this an exact sum of marginal log-densities.
        Points outside any marginal's support get -inf, which Metropolis
        ratios treat as certain rejection.
        """
        x = np.asarray(x, dtype=float)
        batched = x.ndim == 2
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {pts.shape[1]}")
        total = np.zeros(pts.shape[0])
        for j, m in enumerate(self.marginals):
            total += m.log_pdf(pts[:, j])
        return total if batched else float(total[0])

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        """n i.i.d. draws, shape (n, d), deterministic in the stream address."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        return self.sample_using(rng.generator(), n)

    def sample_using(self, gen: np.random.Generator, n: int) -> np.ndarray:
        """Draws from an already-open generator, advancing its state."""
        cols = [m.sample(gen, n) for m in self.marginals]
        return np.column_stack(cols)
