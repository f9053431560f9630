#!/usr/bin/env python3
"""
Fixed-Radius Neighbor Search
Uniform cell list (sorted cell ids + pivots) returning all pairs within a cutoff
"""

import itertools
import logging
from typing import Optional, Tuple

import numpy as np

from core.errors import InvalidArgumentError, ResourceError

logger = logging.getLogger(__name__)


def pair_distances(points: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Euclidean distances for index pairs; one formula for every search path"""
    diff = points[rows] - points[cols]
    return np.sqrt(np.sum(diff * diff, axis=1))


class CellGrid:
    """Points bucketed into cubic cells of side `side`, sorted by cell id"""

    def __init__(self, points: np.ndarray, side: float):
        if side <= 0:
            raise InvalidArgumentError(f"Cell side must be positive, got {side}")
        self.points = np.asarray(points, dtype=float)
        self.side = float(side)
        self.origin = self.points.min(axis=0)
        coords = np.floor((self.points - self.origin) / self.side).astype(np.int64)
        self.shape = coords.max(axis=0) + 1
        # row-major linear id, first axis slowest
        self.strides = np.ones(len(self.shape), dtype=np.int64)
        for axis in range(len(self.shape) - 2, -1, -1):
            self.strides[axis] = self.strides[axis + 1] * self.shape[axis + 1]
        self.coords = coords
        self.cells = coords @ self.strides
        self.permutation = np.argsort(self.cells, kind='stable')
        self.sorted_cells = self.cells[self.permutation]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def bucket(self, cell_ids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Start/stop pivots into the permutation for each requested cell id"""
        start = np.searchsorted(self.sorted_cells, cell_ids, side='left')
        stop = np.searchsorted(self.sorted_cells, cell_ids, side='right')
        return start, stop


def _expand_ranges(start: np.ndarray, stop: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(owner index, position) for every position in the half-open ranges"""
    counts = stop - start
    total = int(counts.sum())
    owner = np.repeat(np.arange(start.shape[0]), counts)
    if total == 0:
        return owner, np.zeros(0, dtype=np.int64)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return owner, start[owner] + offsets


def radius_pairs(points: np.ndarray, cutoff: float,
                 max_pairs: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All pairs i < j with |x_i - x_j| <= cutoff, sorted by (i, j)

    Returns (rows, cols, distances). `max_pairs` bounds the candidate count and
    raises ResourceError before the pair arrays are materialized.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    if cutoff <= 0:
        raise InvalidArgumentError(f"Cutoff must be positive, got {cutoff}")
    if n < 2:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)

    grid = CellGrid(points, cutoff)
    rows, cols, dists = [], [], []
    candidates = 0
    for offset in itertools.product((-1, 0, 1), repeat=d):
        offset = np.asarray(offset, dtype=np.int64)
        neighbor = grid.coords + offset
        inside = np.all((neighbor >= 0) & (neighbor < grid.shape), axis=1)
        source = np.nonzero(inside)[0]
        start, stop = grid.bucket(neighbor[source] @ grid.strides)
        candidates += int((stop - start).sum())
        if max_pairs is not None and candidates > 2 * max_pairs + n:
            raise ResourceError(
                f"Neighbor search exceeds the pair budget ({max_pairs} pairs); "
                f"reduce eps or raise graph.memory_budget_bytes")
        owner, position = _expand_ranges(start, stop)
        i = source[owner]
        j = grid.permutation[position]
        keep = i < j
        i, j = i[keep], j[keep]
        dist = pair_distances(points, i, j)
        close = dist <= cutoff
        rows.append(i[close])
        cols.append(j[close])
        dists.append(dist[close])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    dists = np.concatenate(dists)
    order = np.lexsort((cols, rows))
    logger.debug("Cell grid %s found %d pairs within %.4g", tuple(grid.shape), rows.shape[0], cutoff)
    return rows[order], cols[order], dists[order]


def brute_force_pairs(points: np.ndarray, cutoff: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """O(n^2) reference for radius_pairs"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rows, cols = np.triu_indices(points.shape[0], k=1)
    dist = pair_distances(points, rows, cols)
    close = dist <= cutoff
    return rows[close], cols[close], dist[close]
