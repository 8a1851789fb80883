"""Piecewise-uniform CTMC state grids aligned with quadrature nodes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing CTMC states (price or log-price units).

    ``aligned_nodes`` are the points the grid was built around; each of them is
    an exact element of ``points``.
    """

    points: np.ndarray
    aligned_nodes: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 3:
            raise GridError("a grid needs at least 3 points")
        if np.any(np.diff(pts) <= 0):
            raise GridError("grid points must be strictly increasing")
        pts.setflags(write=False)
        nodes = np.array(self.aligned_nodes, dtype=float)
        nodes.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "aligned_nodes", nodes)

    def __len__(self) -> int:
        return self.points.size

    @property
    def delta_max(self) -> float:
        return float(np.diff(self.points).max())

    @property
    def lower(self) -> float:
        return float(self.points[0])

    @property
    def upper(self) -> float:
        return float(self.points[-1])

    def index(self, value: float) -> int:
        """Index of a state that is exactly on the grid."""
        i = int(np.searchsorted(self.points, value))
        if i >= self.points.size or self.points[i] != value:
            raise GridError(f"{value!r} is not a grid point")
        return i

    def contains(self, value: float) -> bool:
        i = int(np.searchsorted(self.points, value))
        return i < self.points.size and self.points[i] == value

    def shifted(self, offset: float) -> "Grid":
        return Grid(self.points + offset, self.aligned_nodes + offset)


def _allocate(lengths: np.ndarray, intervals: int) -> np.ndarray:
    """Split ``intervals`` among segments in proportion to their lengths.

    Every segment gets at least one interval.  After rounding, single
    intervals are added to (or removed from) the segments whose rounding
    error is largest, preferring longer segments on ties.
    """
    ideal = lengths / lengths.sum() * intervals
    counts = np.maximum(1, np.rint(ideal).astype(np.int64))
    # stable order: largest deficit first, ties toward the longest segment
    while counts.sum() < intervals:
        deficit = ideal - counts
        k = np.lexsort((-lengths, -deficit))[0]
        counts[k] += 1
    while counts.sum() > intervals:
        excess = counts - ideal
        excess[counts <= 1] = -np.inf
        if not np.isfinite(excess).any():
            break
        k = np.lexsort((-lengths, -excess))[0]
        counts[k] -= 1
    return counts


def build_aligned_grid(lower: float, upper: float, nodes, target_n: int) -> Grid:
    """Grid on ``[lower, upper]`` that is uniform between consecutive nodes.

    ``target_n`` is the desired total number of points.  Every node becomes an
    exact grid point and the spacing inside each segment is constant.
    """
    nodes = np.asarray(nodes, dtype=float).ravel()
    if nodes.size == 0:
        raise GridError("at least one node is required")
    if np.any(np.diff(nodes) <= 0):
        raise GridError("nodes must be strictly increasing without duplicates")
    if not lower < nodes[0] or not nodes[-1] < upper:
        raise GridError(f"nodes must lie strictly inside ({lower}, {upper})")
    if target_n < nodes.size + 2:
        raise GridError(f"target_n={target_n} too small for {nodes.size} nodes")

    breaks = np.concatenate(([lower], nodes, [upper]))
    counts = _allocate(np.diff(breaks), int(target_n) - 1)
    pieces = [
        np.linspace(breaks[k], breaks[k + 1], counts[k] + 1)[:-1] for k in range(counts.size)
    ]
    pieces.append(np.array([upper]))
    return Grid(np.concatenate(pieces), nodes)


def uniform_grid(lower: float, spacing: float, count: int) -> Grid:
    return Grid(lower + spacing * np.arange(count), np.array([]))


def left_neighbor(grid: Grid, x: float) -> float:
    """Largest grid point strictly below ``x``."""
    i = int(np.searchsorted(grid.points, x, side="left"))
    if i == 0:
        raise GridError(f"no grid point below {x!r}")
    return float(grid.points[i - 1])


def right_neighbor(grid: Grid, x: float) -> float:
    """Smallest grid point strictly above ``x``."""
    i = int(np.searchsorted(grid.points, x, side="right"))
    if i >= grid.points.size:
        raise GridError(f"no grid point above {x!r}")
    return float(grid.points[i])
