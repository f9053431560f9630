#!/usr/bin/env python3
"""
Continuum Spectrum Service
Reference eigenpairs of the weighted Neumann operators, nonlocal energy and continuum clustering
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from core.errors import InvalidArgumentError
from core.geometry import DensityField, Domain, GridMeasure, WeightedPointSet, grid_discretize
from core.kernels import INDICATOR, RadialKernel, eval_scaled_distance
from graph.neighbors import radius_pairs
from services import kmeans
from services.eigensolver import (EigenBasis, Spectrum, constrained_minimum, fix_signs,
                                  group_eigenvalues, smallest_k)
from services.transport import pushforward

logger = logging.getLogger(__name__)

OPERATOR_KINDS = ('L', 'Nsym', 'Nrw')
OPERATOR_FOR_LAPLACIAN = {'unnormalized': 'L', 'sym': 'Nsym', 'rw': 'Nrw'}
EXCLUDED_MASS_WARNING = 1e-3
ROW_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class ContinuumOperator:
    """L u = -(1/rho) div(rho^2 grad u); N^rw u = -(1/rho^2) div(rho^2 grad u);
    N^sym u = -(rho^-3/2) div(rho^2 grad(u / sqrt(rho)))"""
    kind: str
    density: DensityField
    domain: Domain

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise InvalidArgumentError(f"Unknown continuum operator '{self.kind}', expected {OPERATOR_KINDS}")

    @classmethod
    def for_laplacian(cls, laplacian_kind: str, density: DensityField, domain: Domain) -> 'ContinuumOperator':
        return cls(OPERATOR_FOR_LAPLACIAN[laplacian_kind], density, domain)


@dataclass(frozen=True)
class GridFunction:
    values: np.ndarray
    grid: GridMeasure

    def __post_init__(self):
        if np.asarray(self.values).shape[0] != self.grid.size:
            raise InvalidArgumentError("GridFunction values are not conformal with the grid")

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        lower = np.asarray(self.grid.domain.lower)
        raw = np.floor((points - lower) / self.grid.spacing).astype(np.int64)
        raw = np.clip(raw, 0, np.asarray(self.grid.resolution) - 1)
        return np.ravel_multi_index(raw.T, self.grid.resolution)

    def at(self, points: np.ndarray) -> np.ndarray:
        """Piecewise-constant evaluation at arbitrary points of the domain"""
        return np.asarray(self.values)[self.cell_index(points)]

    def norm(self) -> float:
        return float(np.sqrt(self.grid.weights @ np.asarray(self.values) ** 2))


@dataclass
class ContinuumSolution:
    """Reference spectrum with its eigenfunctions sampled on a grid"""
    operator: ContinuumOperator
    spectrum: Spectrum
    basis: EigenBasis
    grid: GridMeasure
    method: str
    evaluators: List[Callable[[np.ndarray], np.ndarray]] = field(default_factory=list)
    stiffness: Optional[sp.csr_matrix] = None
    mass: Optional[np.ndarray] = None

    def function(self, index: int) -> GridFunction:
        return GridFunction(self.basis.vectors[:, index], self.grid)

    def evaluate(self, points: np.ndarray, indices: Sequence[int]) -> np.ndarray:
        """Eigenfunction values at points: exact when analytic, cell lookup otherwise"""
        if self.evaluators:
            return np.column_stack([self.evaluators[j](points) for j in indices])
        lookup = GridFunction(self.basis.vectors[:, 0], self.grid).cell_index(points)
        return self.basis.vectors[lookup][:, list(indices)]


def _operator_scale(kind: str, density: DensityField) -> float:
    """Eigenvalue factor of each operator relative to -Delta for constant rho"""
    level = density.lower_bound
    return level if kind == 'L' else 1.0


def _multi_indices(lengths: np.ndarray, k: int) -> np.ndarray:
    shortest = lengths.min()
    bounds = [int(np.ceil(k * length / shortest)) + 1 for length in lengths]
    return np.array(list(itertools.product(*[range(b) for b in bounds])), dtype=float)


def analytic_neumann_box(domain: Domain, density: DensityField, k: int,
                         kind: str = 'L') -> Tuple[Spectrum, List[Callable[[np.ndarray], np.ndarray]]]:
    """Closed-form Neumann eigenpairs on a box with constant rho"""
    if not density.is_constant:
        raise InvalidArgumentError("Analytic Neumann spectrum needs a constant density; use fd_weighted_eigs")
    if kind not in OPERATOR_KINDS:
        raise InvalidArgumentError(f"Unknown continuum operator '{kind}'")
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    lengths = domain.lengths
    lower = np.asarray(domain.lower)
    indices = _multi_indices(lengths, k)
    values = np.pi ** 2 * np.sum((indices / lengths) ** 2, axis=1)
    # ties broken by the multi-index, lowest axis first
    order = np.lexsort(tuple(indices.T[::-1]) + (np.round(values, 12),))
    indices, values = indices[order][:k], values[order][:k]
    values = values * _operator_scale(kind, density)

    def evaluator(m: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        factor = np.sqrt(2.0 ** np.count_nonzero(m))

        def evaluate(points: np.ndarray) -> np.ndarray:
            points = np.atleast_2d(points)
            return factor * np.prod(np.cos(np.pi * m * (points - lower) / lengths), axis=1)
        return evaluate

    spectrum = Spectrum(values, group_eigenvalues(values))
    return spectrum, [evaluator(m) for m in indices]


def analytic_solution(operator: ContinuumOperator, k: int, resolution) -> ContinuumSolution:
    """Analytic eigenpairs plus their samples on a midpoint grid"""
    spectrum, evaluators = analytic_neumann_box(operator.domain, operator.density, k, operator.kind)
    grid = grid_discretize(operator.density, operator.domain, resolution)
    vectors = np.column_stack([f(grid.centers) for f in evaluators])
    basis = EigenBasis(vectors, grid.weights, spectrum)
    return ContinuumSolution(operator, spectrum, basis, grid, 'analytic', evaluators)


def neumann_stiffness(grid: GridMeasure, rho: np.ndarray) -> sp.csr_matrix:
    """sum over interfaces of (rho_i^2 + rho_j^2)/2 * cellvol/h_a^2 * (e_i - e_j)(e_i - e_j)^T

    No flux crosses the boundary (mirrored ghost cells), so rows sum to zero.
    """
    shape = grid.resolution
    size = grid.size
    index = np.arange(size).reshape(shape)
    rows, cols, data = [], [], []
    flux = rho ** 2
    for axis, h in enumerate(grid.spacing):
        left = np.take(index, np.arange(shape[axis] - 1), axis=axis).ravel()
        right = np.take(index, np.arange(1, shape[axis]), axis=axis).ravel()
        coefficient = 0.5 * (flux[left] + flux[right]) * grid.cell_volume / h ** 2
        rows += [left, right, left, right]
        cols += [left, right, right, left]
        data += [coefficient, coefficient, -coefficient, -coefficient]
    stiffness = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(size, size))
    stiffness.sum_duplicates()
    return stiffness


def fd_system(operator: ContinuumOperator, resolution) -> Tuple[GridMeasure, sp.csr_matrix, np.ndarray]:
    """(grid, symmetric stiffness, diagonal mass) of the operator's weak form"""
    grid = grid_discretize(operator.density, operator.domain, resolution)
    if min(grid.resolution) < 8:
        raise InvalidArgumentError(f"Finite-difference resolution must be >= 8 per axis, got {grid.resolution}")
    rho = grid.density_values
    stiffness = neumann_stiffness(grid, rho)
    volume = grid.cell_volume
    if operator.kind == 'L':
        mass = rho * volume
    elif operator.kind == 'Nrw':
        mass = rho ** 2 * volume
    else:
        scale = sp.diags(1.0 / np.sqrt(rho))
        stiffness = (scale @ stiffness @ scale).tocsr()
        stiffness = ((stiffness + stiffness.T) * 0.5).tocsr()
        mass = rho * volume
    return grid, stiffness, mass


def fd_weighted_eigs(operator: ContinuumOperator, resolution, k: int, seed: int = 0,
                     dense_threshold: int = 512, group_rtol: float = 1e-6) -> ContinuumSolution:
    """Divergence-form FD eigenpairs, unit norm under <.,.>_rho (grid cell masses)"""
    grid, stiffness, mass = fd_system(operator, resolution)
    spectrum, basis = smallest_k(stiffness, k, weights=grid.weights, mass=mass,
                                 dense_threshold=dense_threshold, seed=seed, group_rtol=group_rtol)
    if operator.kind == 'Nrw' and not operator.density.is_constant:
        basis = EigenBasis(basis.vectors, basis.weights, basis.spectrum, basis.residuals, orthonormal=False)
    logger.debug("FD %s eigenpairs on grid %s: %s", operator.kind, grid.resolution,
                 np.array2string(spectrum.values, precision=6))
    return ContinuumSolution(operator, spectrum, basis, grid, 'fd', stiffness=stiffness, mass=mass)


def continuum_reference(operator: ContinuumOperator, k: int, resolution, seed: int = 0) -> ContinuumSolution:
    """Analytic path whenever rho is constant, finite differences otherwise"""
    if operator.density.is_constant:
        return analytic_solution(operator, k, resolution)
    return fd_weighted_eigs(operator, resolution, k, seed=seed)


def nonlocal_energy(density: DensityField, grid: GridMeasure, u, eps: float,
                    kernel: RadialKernel = INDICATOR) -> float:
    """G_eps(u) = (1/eps^2) sum_{a,b} eta_eps(c_a - c_b) (u_a - u_b)^2 m_a m_b over grid cells"""
    values = np.asarray(u.values if isinstance(u, GridFunction) else u, dtype=float)
    if values.shape[0] != grid.size:
        raise InvalidArgumentError("u is not conformal with the grid")
    if eps is None or eps < 2.0 * grid.spacing.max():
        raise InvalidArgumentError(
            f"eps = {eps} is below two grid spacings ({2.0 * grid.spacing.max():.4g}); refine the grid")
    rows, cols, dist = radius_pairs(grid.centers, eps * kernel.support_radius)
    weights = eval_scaled_distance(kernel, grid.domain.dimension, eps, dist)
    masses = grid.weights
    # each unordered pair counted twice in the double sum; the diagonal contributes zero
    total = 2.0 * np.sum(weights * (values[rows] - values[cols]) ** 2 * masses[rows] * masses[cols])
    return float(total / eps ** 2)


def local_energy(grid: GridMeasure, gradient_sq: np.ndarray) -> float:
    """G(u) = int |grad u|^2 rho^2 dx by midpoint quadrature"""
    return float(np.sum(gradient_sq * grid.density_values ** 2) * grid.cell_volume)


@dataclass
class ContinuumClustering:
    assignment: kmeans.ClusterAssignment
    grid: GridMeasure
    result: kmeans.KMeansResult
    excluded_mass: float
    warning: bool

    @property
    def labels(self) -> np.ndarray:
        return self.assignment.labels


def spectral_embedding(vectors: np.ndarray, normalized_rows: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Rows of the eigenvector matrix, optionally unit-normalized; returns (embedding, kept mask)"""
    if not normalized_rows:
        return vectors, np.ones(vectors.shape[0], dtype=bool)
    norms = np.linalg.norm(vectors, axis=1)
    kept = norms >= ROW_NORM_FLOOR
    embedding = np.zeros_like(vectors)
    embedding[kept] = vectors[kept] / norms[kept, None]
    return embedding, kept


def continuum_spectral_clustering(solution: ContinuumSolution, k: int, normalized_rows: bool = False,
                                  restarts: int = 20, seed: int = 0) -> ContinuumClustering:
    """k-means on (u_1..u_k)_# nu, labels pulled back to grid cells"""
    if k < 1 or k > solution.basis.k:
        raise InvalidArgumentError(f"Need 1 <= k <= {solution.basis.k} eigenfunctions, got {k}")
    grid = solution.grid
    embedding, kept = spectral_embedding(solution.basis.vectors[:, :k], normalized_rows)
    excluded_mass = float(grid.weights[~kept].sum())
    kept_weights = grid.weights[kept]
    embedded = WeightedPointSet(embedding[kept], kept_weights, mass=float(kept_weights.sum()))

    pushed = pushforward(embedded, embedded.points)
    result = kmeans.minimize(pushed, k, restarts=restarts, seed=seed)
    labels_kept = kmeans.assign(embedded, result.centers).labels

    labels = np.full(grid.size, -1, dtype=np.int64)
    labels[kept] = labels_kept
    masses = np.array([grid.weights[labels == j].sum() for j in range(k)])
    restricted = tuple(
        WeightedPointSet(grid.centers[labels == j], grid.weights[labels == j], mass=float(masses[j]))
        if masses[j] > 0 else None
        for j in range(k))
    assignment = kmeans.ClusterAssignment(labels, result.centers, masses, restricted,
                                          excluded_mass=excluded_mass)
    warning = excluded_mass > EXCLUDED_MASS_WARNING
    if warning:
        logger.warning("⚠️  Continuum clustering excluded mass %.3g above %.0e", excluded_mass,
                       EXCLUDED_MASS_WARNING)
    return ContinuumClustering(assignment, grid, result, excluded_mass, warning)


def courant_fischer_check(solution: ContinuumSolution, k: int, trials: int = 50, seed: int = 0) -> Dict:
    """Constrained minima over random (k-1)-dim subspaces never exceed lambda_k"""
    if solution.stiffness is None:
        raise InvalidArgumentError("Courant-Fischer check needs the finite-difference system")
    if k > solution.basis.k:
        raise InvalidArgumentError(f"Basis has {solution.basis.k} vectors, need k = {k}")
    stiffness, mass = solution.stiffness, solution.mass
    lam = float(solution.spectrum.values[k - 1])
    tolerance = 1e-8 * max(abs(lam), 1.0)
    rng = np.random.default_rng(seed)

    attained = constrained_minimum(stiffness, solution.basis.vectors[:, :k - 1] if k > 1 else None, mass)
    random_minima = []
    for _ in range(trials if k > 1 else 1):
        constraints = rng.standard_normal((stiffness.shape[0], k - 1)) if k > 1 else None
        random_minima.append(constrained_minimum(stiffness, constraints, mass))
    random_minima = np.array(random_minima)
    violations = int(np.sum(random_minima > lam + tolerance))
    return {
        'k': k,
        'eigenvalue': lam,
        'attained': attained,
        'attained_matches': bool(abs(attained - lam) <= tolerance),
        'random_max': float(random_minima.max()),
        'violations': violations,
        'passed': bool(violations == 0 and abs(attained - lam) <= tolerance),
    }


def align_to_reference(vectors: np.ndarray, weights: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Sign of each column chosen to maximize <u, ref>_w"""
    return fix_signs(vectors, weights, reference)
