#!/usr/bin/env python3
"""
Weighted K-Means Service
k-means++ seeding, Lloyd iterations, Voronoi assignment and stability diagnostics
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from core.errors import InternalInvariantError, InvalidArgumentError
from core.geometry import WeightedPointSet

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 20
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-12
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CenterSet:
    centers: np.ndarray

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if centers.shape[0] < 1:
            raise InvalidArgumentError("CenterSet needs at least one center")
        if not np.all(np.isfinite(centers)):
            raise InvalidArgumentError("Centers must be finite")
        object.__setattr__(self, 'centers', centers)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def canonical(self) -> np.ndarray:
        """Centers in lexicographic order, for comparisons up to relabeling"""
        order = np.lexsort(self.centers.T[::-1])
        return self.centers[order]


@dataclass(frozen=True)
class ClusterAssignment:
    """Nearest-center labels (0-based, ties to the lowest index) and restricted measures"""
    labels: np.ndarray
    centers: CenterSet
    masses: np.ndarray
    restricted: Tuple[Optional[WeightedPointSet], ...]
    tied_mass: float = 0.0
    excluded_mass: float = 0.0

    @property
    def k(self) -> int:
        return self.centers.k


@dataclass
class KMeansResult:
    centers: CenterSet
    value: float
    support_fits: bool = False
    iterations: int = 0
    minima: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    unique: bool = True


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return cdist(points, centers, metric='sqeuclidean')


def objective(measure: WeightedPointSet, centers) -> float:
    """F(z) = sum_i w_i min_j |x_i - z_j|^2"""
    centers = centers if isinstance(centers, CenterSet) else CenterSet(centers)
    distances = _squared_distances(measure.points, centers.centers)
    return float(measure.weights @ distances.min(axis=1))


def kmeans_plusplus(points: np.ndarray, weights: np.ndarray, k: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Weighted D^2 seeding"""
    m = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = rng.choice(m, p=weights / weights.sum())
    centers[0] = points[first]
    closest = _squared_distances(points, centers[:1]).ravel()
    for i in range(1, k):
        scores = weights * closest
        total = scores.sum()
        if total <= 0:
            # every support point already coincides with a center
            centers[i] = points[rng.integers(m)]
        else:
            centers[i] = points[rng.choice(m, p=scores / total)]
        closest = np.minimum(closest, _squared_distances(points, centers[i:i + 1]).ravel())
    return centers


def _lloyd(points: np.ndarray, weights: np.ndarray, centers: np.ndarray,
           max_iter: int, tol: float) -> Tuple[np.ndarray, float, int]:
    distances = _squared_distances(points, centers)
    value = float(weights @ distances.min(axis=1))
    iterations = 0
    for iterations in range(1, max_iter + 1):
        labels = np.argmin(distances, axis=1)
        updated = centers.copy()
        for j in range(centers.shape[0]):
            members = labels == j
            mass = weights[members].sum()
            if mass > 0:
                updated[j] = weights[members] @ points[members] / mass
        empty = [j for j in range(centers.shape[0]) if not np.any(labels == j)]
        if empty:
            contribution = weights * distances[np.arange(points.shape[0]), labels]
            for j in empty:
                worst = int(np.argmax(contribution))
                updated[j] = points[worst]
                contribution[worst] = -1.0
        distances = _squared_distances(points, updated)
        new_value = float(weights @ distances.min(axis=1))
        if new_value > value * (1.0 + 1e-12) + 1e-15:
            raise InternalInvariantError(
                f"Lloyd objective increased from {value:.17g} to {new_value:.17g}")
        centers = updated
        converged = value - new_value <= tol * value
        value = new_value
        if converged:
            break
    return centers, value, iterations


def minimize(measure: WeightedPointSet, k: int, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
             max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
             threads: int = 1) -> KMeansResult:
    """Best of `restarts` k-means++ / Lloyd runs; deterministic given seed"""
    if k is None or k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if restarts < 1:
        raise InvalidArgumentError(f"restarts must be >= 1, got {restarts}")
    points, weights = measure.points, measure.weights

    distinct = np.unique(points, axis=0)
    if distinct.shape[0] <= k:
        padded = np.vstack([distinct] + [distinct[-1:]] * (k - distinct.shape[0]))
        return KMeansResult(CenterSet(padded), 0.0, support_fits=True,
                            minima=[(0.0, padded)], unique=distinct.shape[0] == k)

    children = np.random.SeedSequence(seed).spawn(restarts)

    def run(child) -> Tuple[np.ndarray, float, int]:
        rng = np.random.default_rng(child)
        start = kmeans_plusplus(points, weights, k, rng)
        return _lloyd(points, weights, start, max_iter, tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(run, children))
    else:
        runs = [run(child) for child in children]

    best_index = min(range(len(runs)), key=lambda r: (runs[r][1], r))
    best_centers, best_value, iterations = runs[best_index]

    minima = []
    scale = max(float(np.ptp(points, axis=0).max()), 1e-300)
    for centers, value, _ in runs:
        if value <= best_value * (1.0 + 1e-9) + 1e-15:
            canonical = CenterSet(centers).canonical()
            if not any(np.allclose(canonical, known, atol=1e-6 * scale) for _, known in minima):
                minima.append((value, canonical))
    return KMeansResult(CenterSet(best_centers), best_value, iterations=iterations,
                        minima=minima, unique=len(minima) == 1)


def assign(measure: WeightedPointSet, centers) -> ClusterAssignment:
    """Voronoi labels with ties to the lowest center index, plus mu restricted to each cell"""
    centers = centers if isinstance(centers, CenterSet) else CenterSet(centers)
    distances = _squared_distances(measure.points, centers.centers)
    labels = np.argmin(distances, axis=1)
    nearest = distances[np.arange(labels.shape[0]), labels]
    runner_up = np.partition(distances, 1, axis=1)[:, 1] if centers.k > 1 else np.full_like(nearest, np.inf)
    scale = max(float(np.max(nearest)), 1e-300)
    tied = np.abs(runner_up - nearest) <= TIE_RTOL * scale

    masses = np.zeros(centers.k)
    restricted = []
    for j in range(centers.k):
        members = labels == j
        masses[j] = measure.weights[members].sum()
        if masses[j] > 0:
            restricted.append(WeightedPointSet(measure.points[members], measure.weights[members],
                                               mass=float(masses[j])))
        else:
            restricted.append(None)
    return ClusterAssignment(labels, centers, masses, tuple(restricted),
                             tied_mass=float(measure.weights[tied].sum()))


def centroid_residuals(measure: WeightedPointSet, centers) -> Dict:
    """|z_i - centroid(mu restricted to V_i)|; empty cells flagged with NaN"""
    assignment = assign(measure, centers)
    residuals = np.full(assignment.k, np.nan)
    empty = []
    for j, part in enumerate(assignment.restricted):
        if part is None:
            empty.append(j)
            continue
        residuals[j] = float(np.linalg.norm(assignment.centers.centers[j] - part.centroid()))
    return {'residuals': residuals, 'empty_cells': empty}


def stability_check(mu: WeightedPointSet, nu: WeightedPointSet, centers, d2: float) -> Dict:
    """|F_mu(z) - F_nu(z)| <= d2 (2 min(sqrt F_mu, sqrt F_nu) + d2)"""
    f_mu = objective(mu, centers)
    f_nu = objective(nu, centers)
    lhs = abs(f_mu - f_nu)
    rhs = d2 * (2.0 * min(np.sqrt(f_mu), np.sqrt(f_nu)) + d2)
    return {'F_mu': f_mu, 'F_nu': f_nu, 'lhs': lhs, 'rhs': rhs,
            'holds': bool(lhs <= rhs * (1.0 + 1e-9) + 1e-15)}


def _partitions(m: int, k: int):
    """Restricted growth strings: every partition of m items into at most k blocks"""
    labels = [0] * m

    def extend(position: int, used: int):
        if position == m:
            yield list(labels)
            return
        for label in range(min(used + 1, k)):
            labels[position] = label
            yield from extend(position + 1, max(used, label + 1))

    yield from extend(1, 1) if m > 0 else iter(())


def enumerate_minimum(measure: WeightedPointSet, k: int) -> Tuple[float, np.ndarray]:
    """Exact min F over all partitions of a small support (<= 12 atoms)"""
    m = measure.size
    if m > 12:
        raise InvalidArgumentError("Enumeration oracle is limited to supports of at most 12 atoms")
    points, weights = measure.points, measure.weights
    best_value, best_centers = np.inf, None
    for labels in _partitions(m, k):
        labels = np.asarray(labels)
        centers = []
        value = 0.0
        for j in range(labels.max() + 1):
            members = labels == j
            centroid = weights[members] @ points[members] / weights[members].sum()
            value += float(weights[members] @ np.sum((points[members] - centroid) ** 2, axis=1))
            centers.append(centroid)
        if value < best_value:
            best_value, best_centers = value, np.array(centers)
    return best_value, best_centers
