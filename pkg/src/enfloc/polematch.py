"""Nearest-pole distance classifier.

For each candidate grid, every test pole is scored by its ``X`` closest
training poles of that grid; the grid's score is the mean of all ``X * U``
kept distances and the grid with the smallest mean wins.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMissing, InsufficientData

_ROWS = 256


@dataclass(frozen=True)
class PoleDatabase:
    poles: dict

    def __post_init__(self):
        clean = {}
        for label, p in self.poles.items():
            arr = np.asarray(p, dtype=complex).ravel()
            if arr.size == 0:
                raise InsufficientData(f"grid {label} has no training poles")
            clean[label] = arr
        object.__setattr__(self, "poles", clean)

    @classmethod
    def from_pole_sets(cls, by_grid: dict) -> "PoleDatabase":
        from .armodel import flatten_poles
        return cls({g: flatten_poles(sets) for g, sets in by_grid.items()})

    @property
    def grids(self) -> list:
        return list(self.poles)

    def count(self, grid) -> int:
        return self.poles[grid].size


@dataclass(frozen=True)
class MatchResult:
    distances: dict
    chosen: str
    X: int
    U: int


def pairwise_distance(p: complex, g: complex) -> float:
    return float(abs(complex(p) - complex(g)))


def mean_nearest_distance(test_poles, train_poles, X: int) -> float:
    """Mean over test poles of their ``X`` smallest distances to ``train_poles``."""
    t = np.asarray(test_poles, dtype=complex).ravel()
    g = np.asarray(train_poles, dtype=complex).ravel()
    total = 0.0
    for s in range(0, t.size, _ROWS):
        d = np.abs(t[s:s + _ROWS, None] - g[None, :])
        if X < g.size:
            d = np.partition(d, X - 1, axis=1)[:, :X]
        total += float(np.sort(d, axis=1).sum())
    return total / (X * t.size)


def match(test_poles, db: PoleDatabase, shortlist, X: int = 2) -> MatchResult:
    """Pick the shortlisted grid whose training poles lie closest to ``test_poles``.

    Ties resolve to the earlier entry of ``shortlist``.
    """
    t = np.asarray(test_poles, dtype=complex).ravel()
    if t.size == 0:
        raise InsufficientData("no test poles")
    if X < 1:
        raise ValueError("X must be at least 1")
    if not shortlist:
        raise ValueError("empty shortlist")
    dist = {}
    for grid in shortlist:
        if grid not in db.poles:
            raise GridMissing(f"grid {grid} is not in the pole database")
        if db.count(grid) < X:
            raise InsufficientData(f"grid {grid} has {db.count(grid)} poles, X={X}")
        dist[grid] = mean_nearest_distance(t, db.poles[grid], X)
    chosen = min(shortlist, key=lambda g: dist[g])
    return MatchResult(dist, chosen, X, int(t.size))
