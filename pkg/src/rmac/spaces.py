"""Discrete action and type spaces.

Two concrete space kinds cover every game in the package: uniform real grids
(bids, reports, peaks) and ordered symbolic label spaces (rank-order lists in
school choice). Elements are identified by their integer index; semantic
values are looked up, never compared by floating equality.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import permutations
from typing import Sequence, Union

import numpy as np

_SPACING_TOL = 1e-12
_MULTIPLE_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniformly spaced real grid, inclusive of both endpoints."""

    lo: float
    hi: float
    step: float
    points: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("Grid needs at least one point")
        if self.points[0] != self.lo or self.points[-1] != self.hi:
            raise ValueError("Grid points must start at lo and end at hi")
        if len(self.points) > 1:
            d = np.diff(np.asarray(self.points, dtype=float))
            if np.any(d <= 0.0) or np.any(np.abs(d - self.step) > _SPACING_TOL):
                raise ValueError("Grid points must be strictly increasing with uniform step")

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def values(self) -> np.ndarray:
        arr = np.asarray(self.points, dtype=float)
        arr.flags.writeable = False
        return arr

    def value(self, idx: int) -> float:
        return self.points[idx]

    def nearest_index(self, x: float) -> int:
        """Index of the nearest grid point; exact midpoints go to the lower index."""
        if len(self.points) == 1 or self.step <= 0:
            return 0
        pos = (x - self.lo) / self.step
        idx = int(np.ceil(pos - 0.5))
        return int(np.clip(idx, 0, len(self.points) - 1))


@dataclass(frozen=True)
class LabelSpace:
    """Ordered space of distinct symbolic elements with stable iteration order."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("LabelSpace needs at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("LabelSpace labels must be distinct")

    def __len__(self) -> int:
        return len(self.labels)

    def value(self, idx: int) -> str:
        return self.labels[idx]

    @cached_property
    def index(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    def index_of(self, label: str) -> int:
        return self.index[label]


Space = Union[Grid, LabelSpace]


def grid_make(lo: float, hi: float, step: float) -> Grid:
    """Build the inclusive uniform grid from ``lo`` to ``hi``.

    Rejects non-positive steps (unless the grid is the single point hi == lo)
    and spans that are not an integer multiple of the step.
    """
    lo, hi, step = float(lo), float(hi), float(step)
    if hi < lo:
        raise ValueError(f"grid_make: hi={hi} must be >= lo={lo}")
    if hi == lo:
        return Grid(lo, hi, step, (lo,))
    if step <= 0:
        raise ValueError(f"grid_make: step must be > 0 when hi > lo, got step={step}")
    ratio = (hi - lo) / step
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > _MULTIPLE_TOL * max(1.0, abs(ratio)):
        raise ValueError(
            f"grid_make: span hi-lo={hi - lo!r} is not an integer multiple of "
            f"step={step!r} (ratio={ratio!r})"
        )
    pts = lo + step * np.arange(n + 1)
    pts[-1] = hi
    return Grid(lo, hi, step, tuple(float(p) for p in pts))


PERM_SEP = ">"


def permutation_space(items: Sequence[str], sep: str = PERM_SEP) -> LabelSpace:
    """LabelSpace of all permutations of ``items``, in itertools order."""
    if not items:
        raise ValueError("permutation_space needs at least one item")
    labels = tuple(sep.join(p) for p in permutations(items))
    return LabelSpace(labels)


def perm_tuples(n_items: int) -> tuple[tuple[int, ...], ...]:
    """Permutations of range(n_items) in the same order as permutation_space."""
    return tuple(permutations(range(n_items)))


def space_size(space: Space) -> int:
    return len(space)


def is_grid(space: Space) -> bool:
    return isinstance(space, Grid)


def element_values(space: Space) -> np.ndarray | tuple[str, ...]:
    """Semantic values in index order: floats for grids, labels otherwise."""
    if isinstance(space, Grid):
        return space.values
    return space.labels
