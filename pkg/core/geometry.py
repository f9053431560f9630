#!/usr/bin/env python3
"""
Geometry and Measures
Box domains, ground-truth densities, i.i.d. sampling, empirical and grid measures
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from core.errors import ConfigurationError, InvalidArgumentError

logger = logging.getLogger(__name__)

# Rejection sampling refuses densities whose bound ratio makes acceptance hopeless
MAX_BOUND_RATIO = 1e6
SAMPLE_BATCH_FLOOR = 1024


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box [a_1,b_1] x ... x [a_d,b_d] with d in {1,2,3}"""
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise InvalidArgumentError("Domain bounds must have the same length")
        if len(self.lower) not in (1, 2, 3):
            raise InvalidArgumentError(f"Domain dimension must be 1, 2 or 3, got {len(self.lower)}")
        for a, b in zip(self.lower, self.upper):
            if not a < b:
                raise InvalidArgumentError(f"Domain interval [{a}, {b}] is empty")

    @classmethod
    def unit(cls, d: int) -> 'Domain':
        return cls(tuple([0.0] * d), tuple([1.0] * d))

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float) - np.asarray(self.lower, dtype=float)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.lengths))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        lower = np.asarray(self.lower)
        upper = np.asarray(self.upper)
        return np.all((points >= lower) & (points <= upper), axis=1)


@dataclass(frozen=True)
class DensityField:
    """Normalized density rho on a Domain with bounds m <= rho <= M"""
    name: str
    domain: Domain
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lower_bound: float
    upper_bound: float
    normalization: float
    params: Dict = field(default_factory=dict)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.evaluator(points)

    @property
    def is_constant(self) -> bool:
        return self.lower_bound == self.upper_bound

    @property
    def bound_ratio(self) -> float:
        return self.upper_bound / self.lower_bound


@dataclass(frozen=True)
class PointCloud:
    """n i.i.d. points in a Domain, each carrying mass 1/n"""
    points: np.ndarray
    domain: Domain
    seed: Optional[int] = None

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise InvalidArgumentError("PointCloud needs at least one point")
        if self.points.shape[1] != self.domain.dimension:
            raise InvalidArgumentError("PointCloud dimension does not match its domain")
        self.points.setflags(write=False)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


@dataclass(frozen=True)
class WeightedPointSet:
    """Finitely supported measure sum_i w_i delta_{x_i} of total mass `mass`"""
    points: np.ndarray
    weights: np.ndarray
    mass: float = 1.0

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'weights', weights)
        if points.shape[0] != weights.shape[0]:
            raise InvalidArgumentError("Support and weights have different lengths")
        if points.shape[0] == 0:
            raise InvalidArgumentError("WeightedPointSet must have at least one atom")
        if np.any(weights <= 0):
            raise InvalidArgumentError("WeightedPointSet weights must be strictly positive")
        if abs(weights.sum() - self.mass) > 1e-9:
            raise InvalidArgumentError(
                f"Weights sum to {weights.sum():.12g}, expected {self.mass:.12g}")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def normalized(self) -> 'WeightedPointSet':
        total = float(self.weights.sum())
        return WeightedPointSet(self.points, self.weights / total, 1.0)

    def centroid(self) -> np.ndarray:
        return self.weights @ self.points / self.weights.sum()

    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.points ** 2, axis=1))


@dataclass(frozen=True)
class GridMeasure:
    """Midpoint-rule discretization of nu on a regular grid of cell centers"""
    domain: Domain
    resolution: Tuple[int, ...]
    centers: np.ndarray
    weights: np.ndarray
    density_values: np.ndarray

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def spacing(self) -> np.ndarray:
        return self.domain.lengths / np.asarray(self.resolution, dtype=float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def as_point_set(self) -> WeightedPointSet:
        return WeightedPointSet(self.centers, self.weights)

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """Arrange per-cell values on the grid's index space"""
        return np.asarray(values).reshape(self.resolution)


def derive_seed(seed_base: int, trial_index: int) -> int:
    """Per-trial seed: seed_base + trial_index"""
    return int(seed_base) + int(trial_index)


def sample(density: DensityField, domain: Domain, n: int, seed: int) -> PointCloud:
    """Draw n i.i.d. points from density by rejection against the bound M"""
    if n is None or int(n) < 1:
        raise InvalidArgumentError(f"Sample size must be >= 1, got {n}")
    n = int(n)
    if density.bound_ratio > MAX_BOUND_RATIO:
        raise ConfigurationError(
            f"Density bound ratio M/m = {density.bound_ratio:.3g} makes rejection sampling impractical")

    rng = np.random.default_rng(seed)
    lower = np.asarray(domain.lower, dtype=float)
    lengths = domain.lengths
    accepted: List[np.ndarray] = []
    count = 0
    # expected acceptance rate is 1/(M * volume)
    rate = 1.0 / (density.upper_bound * domain.volume)
    while count < n:
        batch = max(SAMPLE_BATCH_FLOOR, int(np.ceil(1.2 * (n - count) / rate)))
        proposals = lower + rng.random((batch, domain.dimension)) * lengths
        thresholds = rng.random(batch) * density.upper_bound
        keep = proposals[thresholds < density(proposals)]
        accepted.append(keep)
        count += keep.shape[0]

    points = np.concatenate(accepted, axis=0)[:n]
    logger.debug("Sampled %d points from %s (seed=%s)", n, density.name, seed)
    return PointCloud(points=np.ascontiguousarray(points), domain=domain, seed=seed)


def empirical_measure(cloud: PointCloud) -> WeightedPointSet:
    """nu_n = (1/n) sum_i delta_{x_i}"""
    return WeightedPointSet(np.array(cloud.points, dtype=float), cloud.weights)


def grid_centers(domain: Domain, resolution: Sequence[int]) -> np.ndarray:
    axes = [
        lo + (np.arange(r) + 0.5) * (hi - lo) / r
        for lo, hi, r in zip(domain.lower, domain.upper, resolution)
    ]
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.stack([m.ravel() for m in mesh], axis=1)


def grid_discretize(density: DensityField, domain: Domain, resolution) -> GridMeasure:
    """Cell masses by midpoint quadrature of rho, renormalized to sum to 1"""
    if np.isscalar(resolution):
        resolution = (int(resolution),) * domain.dimension
    resolution = tuple(int(r) for r in resolution)
    if len(resolution) != domain.dimension:
        raise InvalidArgumentError("Grid resolution must give one count per axis")
    if min(resolution) < 2:
        raise InvalidArgumentError(f"Grid resolution must be >= 2 per axis, got {resolution}")

    centers = grid_centers(domain, resolution)
    values = density(centers)
    cell_volume = domain.volume / float(np.prod(resolution))
    raw = values * cell_volume
    weights = raw / raw.sum()
    return GridMeasure(domain=domain, resolution=resolution, centers=centers,
                       weights=weights, density_values=values)


# Built-in densities

def uniform_density(domain: Domain) -> DensityField:
    level = 1.0 / domain.volume

    def evaluate(points: np.ndarray) -> np.ndarray:
        return np.full(points.shape[0], level)

    return DensityField('uniform', domain, evaluate, level, level, domain.volume, {})


def affine_density(domain: Domain, c0: float, c: Sequence[float]) -> DensityField:
    """rho(x) proportional to c0 + c.x, positive on the whole box"""
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape[0] != domain.dimension:
        raise ConfigurationError("Affine density slope must have one entry per axis")
    lower = np.asarray(domain.lower)
    upper = np.asarray(domain.upper)
    corner_min = c0 + np.sum(np.minimum(c * lower, c * upper))
    corner_max = c0 + np.sum(np.maximum(c * lower, c * upper))
    if corner_min <= 0:
        raise ConfigurationError("Affine density must be bounded away from zero on the domain")
    total = domain.volume * (c0 + float(c @ ((lower + upper) / 2.0)))

    def evaluate(points: np.ndarray) -> np.ndarray:
        return (c0 + points @ c) / total

    return DensityField('affine', domain, evaluate, corner_min / total, corner_max / total,
                        total, {'c0': float(c0), 'c': c.tolist()})


def gaussian_bumps_density(domain: Domain, centers: Sequence[Sequence[float]], width: float,
                           floor: float, amplitudes: Optional[Sequence[float]] = None) -> DensityField:
    """floor + sum_j a_j prod_i exp(-(x_i - c_ji)^2 / 2 s^2), truncated to the box"""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[1] != domain.dimension:
        raise ConfigurationError("Bump centers must have the domain dimension")
    if width <= 0:
        raise ConfigurationError("Bump width must be positive")
    if floor <= 0:
        raise ConfigurationError("Bump density floor must be positive")
    amplitudes = np.ones(centers.shape[0]) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    if amplitudes.shape != (centers.shape[0],):
        raise ConfigurationError("Bump amplitudes must have one entry per center")
    if np.any(amplitudes <= 0):
        raise ConfigurationError("Bump amplitudes must be positive")
    lower = np.asarray(domain.lower)
    upper = np.asarray(domain.upper)
    scale = width * np.sqrt(2.0)

    # separable closed-form integral of each bump over the box
    per_axis = width * np.sqrt(np.pi / 2.0) * (erf((upper - centers) / scale) - erf((lower - centers) / scale))
    total = floor * domain.volume + float(amplitudes @ np.prod(per_axis, axis=1))

    def evaluate(points: np.ndarray) -> np.ndarray:
        sq = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        return (floor + np.exp(-sq / (2.0 * width ** 2)) @ amplitudes) / total

    return DensityField('gaussian_bumps', domain, evaluate, floor / total,
                        (floor + float(amplitudes.sum())) / total, total,
                        {'centers': centers.tolist(), 'width': float(width), 'floor': float(floor),
                         'amplitudes': amplitudes.tolist()})


DENSITY_BUILDERS = {
    'uniform': lambda domain, **params: uniform_density(domain),
    'affine': lambda domain, **params: affine_density(domain, params.get('c0', 1.0),
                                                      params.get('c', [1.0] * domain.dimension)),
    'gaussian_bumps': lambda domain, **params: gaussian_bumps_density(
        domain, params['centers'], params.get('width', 0.1), params.get('floor', 0.05),
        params.get('amplitudes')),
}


def build_density(name: str, domain: Domain, params: Optional[Dict] = None) -> DensityField:
    """Density by config name + parameters"""
    builder = DENSITY_BUILDERS.get(name)
    if builder is None:
        raise ConfigurationError(f"Unknown density '{name}'. Known: {sorted(DENSITY_BUILDERS)}")
    try:
        return builder(domain, **(params or {}))
    except KeyError as e:
        raise ConfigurationError(f"Density '{name}' is missing parameter {e}") from e
