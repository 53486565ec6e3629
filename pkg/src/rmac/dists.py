"""Finite distributions over discrete spaces."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .rng import categorical
from .spaces import Space

NORMALIZATION_TOL = 1e-9


class FiniteDistribution:
    """Probability weights over the elements of a space.

    Weights are validated (nonnegative, positive total) and renormalized on
    construction; the normalized vector is immutable afterwards.
    """

    __slots__ = ("space", "weights", "_cdf")

    def __init__(self, space: Space, weights: np.ndarray | Sequence[float]):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or len(w) != len(space):
            raise ValueError(f"weights must be a vector of length {len(space)}, got shape {w.shape}")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        total = float(w.sum())
        if total <= 0.0:
            raise ValueError("weights must have positive total mass")
        w = w / total
        w.flags.writeable = False
        self.space = space
        self.weights = w
        self._cdf: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.space)

    @property
    def cdf(self) -> np.ndarray:
        if self._cdf is None:
            c = np.cumsum(self.weights)
            c[-1] = 1.0
            c.flags.writeable = False
            self._cdf = c
        return self._cdf

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0.0)

    def prob(self, idx: int) -> float:
        return float(self.weights[idx])

    def expectation_indexed(self, values: np.ndarray) -> float:
        """Expectation of a vector indexed by element index."""
        return float(self.weights @ np.asarray(values, dtype=float))

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return categorical(rng, self.cdf, n)


def point_mass(space: Space, idx: int) -> FiniteDistribution:
    w = np.zeros(len(space))
    w[idx] = 1.0
    return FiniteDistribution(space, w)


def uniform(space: Space) -> FiniteDistribution:
    return FiniteDistribution(space, np.ones(len(space)))


def dist_from_samples(samples: Sequence[int], space: Space) -> FiniteDistribution:
    """Empirical distribution of element indices: weight = count / len(samples)."""
    if len(samples) == 0:
        raise ValueError("dist_from_samples: empty sample list")
    arr = np.asarray(samples, dtype=int)
    if arr.ndim != 1:
        raise ValueError("samples must be a flat index sequence")
    if arr.min() < 0 or arr.max() >= len(space):
        raise ValueError(
            f"sample index out of range for space of size {len(space)}: "
            f"min={arr.min()}, max={arr.max()}"
        )
    counts = np.bincount(arr, minlength=len(space)).astype(float)
    return FiniteDistribution(space, counts)


def dist_expectation(dist: FiniteDistribution, f: Callable[[object], float]) -> float:
    """Expectation of ``f`` over element values (grid reals or labels)."""
    total = 0.0
    for i in dist.support():
        total += dist.weights[i] * f(dist.space.value(int(i)))
    return float(total)


def mixture(dists: Sequence[FiniteDistribution], lambdas: Sequence[float]) -> FiniteDistribution:
    """Convex mixture of distributions over the same space."""
    if len(dists) == 0 or len(dists) != len(lambdas):
        raise ValueError("mixture needs matching nonempty dists and lambdas")
    space = dists[0].space
    w = np.zeros(len(space))
    for d, lam in zip(dists, lambdas):
        if d.space is not space and len(d.space) != len(space):
            raise ValueError("mixture components must share a space")
        if lam < 0:
            raise ValueError("mixture weights must be nonnegative")
        w += lam * d.weights
    return FiniteDistribution(space, w)


def tv_distance(p: FiniteDistribution, q: FiniteDistribution) -> float:
    return 0.5 * float(np.abs(p.weights - q.weights).sum())
