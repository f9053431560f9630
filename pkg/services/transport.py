#!/usr/bin/env python3
"""
Optimal Transport Service
Exact W2 and TL2 couplings, push-forwards and the bottleneck (infinity) matching
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import ot
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from core.errors import InternalInvariantError, InvalidArgumentError, ResourceError, SolverError
from core.geometry import GridMeasure, PointCloud, WeightedPointSet

logger = logging.getLogger(__name__)

DEFAULT_EXACT_BUDGET = 3000
MARGINAL_TOL = 1e-9
NETWORK_SIMPLEX_MAX_ITER = 10_000_000


@dataclass(frozen=True)
class TransportPlan:
    """Coupling pi between source and target; cost is the optimal squared cost"""
    source: WeightedPointSet
    target: WeightedPointSet
    coupling: sp.coo_matrix
    cost: float

    @property
    def distance(self) -> float:
        return float(np.sqrt(max(self.cost, 0.0)))

    def marginal_errors(self) -> Tuple[float, float]:
        rows = np.asarray(self.coupling.sum(axis=1)).ravel()
        cols = np.asarray(self.coupling.sum(axis=0)).ravel()
        scale = self.source.weights.sum()
        target = self.target.weights * scale / self.target.weights.sum()
        return (float(np.max(np.abs(rows - self.source.weights))),
                float(np.max(np.abs(cols - target))))

    def triplets(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        order = np.lexsort((self.coupling.col, self.coupling.row))
        return self.coupling.row[order], self.coupling.col[order], self.coupling.data[order]


@dataclass(frozen=True)
class TransportMap:
    """Quantized grid atoms (mass 1/n each) mapped one-to-one onto cloud points"""
    atoms: np.ndarray
    atom_cells: np.ndarray
    targets: np.ndarray
    cloud_points: np.ndarray

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def displacements(self) -> np.ndarray:
        return np.linalg.norm(self.atoms - self.cloud_points[self.targets], axis=1)

    @property
    def sup_displacement(self) -> float:
        return float(self.displacements.max()) if self.n else 0.0

    def source_measure(self) -> WeightedPointSet:
        return WeightedPointSet(self.atoms, np.full(self.n, 1.0 / self.n))

    def pushforward_error(self) -> float:
        """Max deviation of T_# (quantized grid) from the empirical measure"""
        counts = np.bincount(self.targets, minlength=self.cloud_points.shape[0])
        return float(np.max(np.abs(counts / self.n - 1.0 / self.cloud_points.shape[0])))


def _check_budget(mu: WeightedPointSet, theta: WeightedPointSet, budget: int) -> None:
    if mu.size > budget or theta.size > budget:
        raise ResourceError(
            f"Exact transport between supports of size {mu.size} and {theta.size} exceeds the "
            f"budget of {budget}+{budget} atoms; coarsen with grid_discretize first")


def _uniform(measure: WeightedPointSet) -> bool:
    return bool(np.allclose(measure.weights, measure.weights[0], rtol=0.0, atol=1e-15))


def wasserstein2(mu: WeightedPointSet, theta: WeightedPointSet,
                 budget: int = DEFAULT_EXACT_BUDGET) -> Tuple[float, TransportPlan]:
    """Exact d_2 by network simplex on c_ij = |x_i - y_j|^2"""
    if mu.dimension != theta.dimension:
        raise InvalidArgumentError(f"Measures live in R^{mu.dimension} and R^{theta.dimension}")
    _check_budget(mu, theta, budget)
    cost = cdist(mu.points, theta.points, metric='sqeuclidean')

    if mu.size == theta.size and _uniform(mu) and _uniform(theta) \
            and abs(mu.weights.sum() - theta.weights.sum()) <= MARGINAL_TOL:
        rows, cols = linear_sum_assignment(cost)
        mass = mu.weights[0]
        coupling = sp.coo_matrix((np.full(rows.shape[0], mass), (rows, cols)), shape=cost.shape)
        total = float(mass * cost[rows, cols].sum())
    else:
        a = mu.weights
        b = theta.weights * (a.sum() / theta.weights.sum())
        plan, log = ot.emd(a, b, cost, numItermax=NETWORK_SIMPLEX_MAX_ITER, log=True)
        if log.get('warning'):
            raise SolverError(f"Network simplex did not finish: {log['warning']}")
        plan = np.where(plan > 0, plan, 0.0)
        coupling = sp.coo_matrix(plan)
        total = float(np.sum(plan * cost))

    transport = TransportPlan(mu, theta, coupling, total)
    row_error, col_error = transport.marginal_errors()
    if max(row_error, col_error) > MARGINAL_TOL:
        raise InternalInvariantError(
            f"Transport plan marginals off by {max(row_error, col_error):.3g}")
    return transport.distance, transport


def _lift(measure: WeightedPointSet, values: np.ndarray) -> WeightedPointSet:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != measure.size:
        raise InvalidArgumentError(
            f"Function has {values.shape[0]} values for a support of {measure.size} atoms")
    return WeightedPointSet(np.hstack([measure.points, values]), measure.weights, measure.mass)


def tl2_distance(mu: WeightedPointSet, f, theta: WeightedPointSet, g,
                 budget: int = DEFAULT_EXACT_BUDGET) -> Tuple[float, TransportPlan]:
    """TL2 distance: W2 between the graph measures (x, f(x)) and (y, g(y))"""
    return wasserstein2(_lift(mu, f), _lift(theta, g), budget)


def pushforward(measure: WeightedPointSet, mapped) -> WeightedPointSet:
    """T_# mu with coincident images merged"""
    mapped = np.asarray(mapped, dtype=float)
    if mapped.ndim == 1:
        mapped = mapped[:, None]
    if mapped.shape[0] != measure.size:
        raise InvalidArgumentError("Map values are not conformal with the measure")
    images, inverse = np.unique(mapped, axis=0, return_inverse=True)
    weights = np.bincount(inverse.ravel(), weights=measure.weights, minlength=images.shape[0])
    return WeightedPointSet(images, weights, measure.mass)


def quantize(grid: GridMeasure, n: int) -> np.ndarray:
    """Per-cell atom counts summing to n, by largest-remainder rounding of n * weights"""
    if grid.size < n:
        raise InvalidArgumentError(f"Grid has {grid.size} cells, fewer than n = {n}")
    scaled = grid.weights * n
    counts = np.floor(scaled).astype(np.int64)
    shortfall = n - int(counts.sum())
    if shortfall > 0:
        remainders = scaled - counts
        # stable order keeps the rounding deterministic on ties
        order = np.argsort(-remainders, kind='stable')
        counts[order[:shortfall]] += 1
    return counts


def _perfect_matching(rows: np.ndarray, cols: np.ndarray, n: int) -> Optional[np.ndarray]:
    graph = sp.csr_matrix((np.ones(rows.shape[0]), (rows, cols)), shape=(n, n))
    matching = maximum_bipartite_matching(graph, perm_type='column')
    if np.any(matching < 0):
        return None
    return matching


def infinity_matching(grid: GridMeasure, cloud: PointCloud) -> Tuple[TransportMap, float]:
    """Bottleneck-optimal assignment of n quantized grid atoms to the n sample points"""
    n = cloud.n
    counts = quantize(grid, n)
    atom_cells = np.repeat(np.arange(grid.size), counts)
    atoms = grid.centers[atom_cells]
    if atoms.shape[0] != n:
        raise InternalInvariantError(f"Quantized grid has {atoms.shape[0]} atoms, expected {n}")

    atom_tree = cKDTree(atoms)
    cloud_tree = cKDTree(cloud.points)
    # start near the typical spacing and double until a perfect matching exists
    radius = max(grid.spacing.max(), grid.domain.diameter / n ** (1.0 / cloud.dimension))
    while True:
        pairs = atom_tree.sparse_distance_matrix(cloud_tree, radius, output_type='ndarray')
        if pairs.shape[0] and _perfect_matching(pairs['i'], pairs['j'], n) is not None:
            break
        if radius > 2.0 * grid.domain.diameter:
            raise InternalInvariantError("No perfect matching even at the domain diameter")
        radius *= 2.0

    candidates = np.unique(pairs['v'])
    lo, hi = 0, candidates.shape[0] - 1
    best = _perfect_matching(pairs['i'], pairs['j'], n)
    while lo < hi:
        mid = (lo + hi) // 2
        keep = pairs['v'] <= candidates[mid]
        matching = _perfect_matching(pairs['i'][keep], pairs['j'][keep], n)
        if matching is None:
            lo = mid + 1
        else:
            hi = mid
            best = matching
    keep = pairs['v'] <= candidates[lo]
    final = _perfect_matching(pairs['i'][keep], pairs['j'][keep], n)
    best = final if final is not None else best

    transport_map = TransportMap(atoms, atom_cells, best.astype(np.int64), np.asarray(cloud.points))
    logger.debug("Infinity matching n=%d sup displacement %.4g", n, transport_map.sup_displacement)
    return transport_map, transport_map.sup_displacement


def tl2_via_map(transport_map: TransportMap, f, g) -> float:
    """Cost of the map coupling between (quantized grid, f) and (nu_n, g)

    f holds one value (or row) per grid cell, g one per cloud point.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if g.ndim == 1:
        g = g[:, None]
    f_atoms = f[transport_map.atom_cells]
    g_mapped = g[transport_map.targets]
    spatial = np.sum((transport_map.atoms - transport_map.cloud_points[transport_map.targets]) ** 2, axis=1)
    values = np.sum((f_atoms - g_mapped) ** 2, axis=1)
    return float(np.sqrt(np.mean(spatial + values)))


def function_gap_via_map(transport_map: TransportMap, f, g) -> float:
    """||f - g o T|| under the quantized grid weights, without the spatial term"""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if g.ndim == 1:
        g = g[:, None]
    diff = f[transport_map.atom_cells] - g[transport_map.targets]
    return float(np.sqrt(np.mean(np.sum(diff ** 2, axis=1))))
