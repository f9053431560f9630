#!/usr/bin/env python3
"""
Radial Kernels
Profiles eta-bar, the eps-rescaling eta_eps and the constants sigma_eta / beta_eta
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import gamma

from core.errors import ConfigurationError, InvalidArgumentError, KernelConditionError

logger = logging.getLogger(__name__)

MONOTONE_GRID_POINTS = 10_000
QUAD_RTOL = 1e-10


@dataclass(frozen=True)
class RadialKernel:
    """Radial profile eta-bar(t), t >= 0, with optional compact support radius"""
    name: str
    profile: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    support_radius: Optional[float] = None
    # interior points where the profile is not smooth, passed to the quadrature
    breakpoints: tuple = ()

    def __call__(self, t) -> np.ndarray:
        return self.profile(np.asarray(t, dtype=float))

    @property
    def is_compact(self) -> bool:
        return self.support_radius is not None


@dataclass(frozen=True)
class KernelConstants:
    kernel: str
    dimension: int
    sigma: float
    beta: float

    @property
    def ratio(self) -> float:
        """sigma_eta / beta_eta, the normalized-Laplacian limit factor"""
        return self.sigma / self.beta

    def as_dict(self) -> Dict:
        return {'kernel': self.kernel, 'd': self.dimension, 'sigma_eta': self.sigma,
                'beta_eta': self.beta, 'sigma_over_beta': self.ratio}


def _indicator(t: np.ndarray) -> np.ndarray:
    return (t <= 1.0).astype(float)


def _truncated_gaussian(t: np.ndarray) -> np.ndarray:
    return np.where(t <= 3.0, np.exp(-t ** 2), 0.0)


def _polynomial(t: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - t ** 2, 0.0, None)


INDICATOR = RadialKernel('indicator', _indicator, 1.0, (1.0,))
TRUNCATED_GAUSSIAN = RadialKernel('gaussian', _truncated_gaussian, 3.0, (3.0,))
POLYNOMIAL = RadialKernel('polynomial', _polynomial, 1.0, (1.0,))

KERNELS = {k.name: k for k in (INDICATOR, TRUNCATED_GAUSSIAN, POLYNOMIAL)}


def get_kernel(name: str) -> RadialKernel:
    kernel = KERNELS.get(name)
    if kernel is None:
        raise ConfigurationError(f"Unknown kernel '{name}'. Known: {sorted(KERNELS)}")
    return kernel


def _check_dimension(d: int) -> None:
    if d not in (1, 2, 3):
        raise InvalidArgumentError(f"Dimension must be 1, 2 or 3, got {d}")


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1}"""
    return 2.0 * math.pi ** (d / 2.0) / gamma(d / 2.0)


def eval_scaled(kernel: RadialKernel, d: int, eps: float, z) -> np.ndarray:
    """eta_eps(z) = eps^-d eta-bar(|z|/eps); z has trailing axis of length d"""
    if eps is None or eps <= 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    z = np.asarray(z, dtype=float)
    radius = np.linalg.norm(z, axis=-1) if z.ndim >= 1 and z.shape[-1] == d else np.abs(z)
    return eps ** (-d) * kernel(radius / eps)


def eval_scaled_distance(kernel: RadialKernel, d: int, eps: float, distances) -> np.ndarray:
    """eta_eps evaluated on precomputed Euclidean distances"""
    if eps is None or eps <= 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    return eps ** (-d) * kernel(np.asarray(distances, dtype=float) / eps)


def _integrate(func: Callable[[float], float], a: float, b: float, points=None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter('error', IntegrationWarning)
        value, _ = quad(func, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=400, points=points)
    return value


def radial_moment(kernel: RadialKernel, power: int) -> float:
    """int_0^inf eta-bar(r) r^power dr, raising KernelConditionError when it diverges"""
    def integrand(r: float) -> float:
        return float(kernel(np.array(r))) * r ** power

    try:
        if kernel.is_compact:
            points = [p for p in kernel.breakpoints if 0.0 < p < kernel.support_radius] or None
            return _integrate(integrand, 0.0, kernel.support_radius, points)

        # non-compact profile: partial integrals over growing ranges must settle
        partial = []
        lower = 0.0
        total = 0.0
        for upper in (10.0, 100.0, 1e3, 1e4, 1e5):
            total += _integrate(integrand, lower, upper)
            partial.append(total)
            lower = upper
    except IntegrationWarning as e:
        raise KernelConditionError(f"Kernel '{kernel.name}' moment r^{power} did not converge: {e}") from e

    if not np.all(np.isfinite(partial)) or abs(partial[-1] - partial[-2]) > 1e-8 * max(abs(partial[-1]), 1e-300):
        raise KernelConditionError(
            f"Kernel '{kernel.name}' moment r^{power} diverges "
            f"(partial integrals {partial[-2]:.6g}, {partial[-1]:.6g})")
    return partial[-1]


def surface_tension(kernel: RadialKernel, d: int) -> float:
    """sigma_eta = int eta(h) h_1^2 dh = (|S^{d-1}| / d) int eta-bar(r) r^{d+1} dr"""
    _check_dimension(d)
    return sphere_area(d) / d * radial_moment(kernel, d + 1)


def total_mass(kernel: RadialKernel, d: int) -> float:
    """beta_eta = int eta(h) dh = |S^{d-1}| int eta-bar(r) r^{d-1} dr"""
    _check_dimension(d)
    return sphere_area(d) * radial_moment(kernel, d - 1)


@lru_cache(maxsize=None)
def kernel_constants(kernel: RadialKernel, d: int) -> KernelConstants:
    """Cached (sigma_eta, beta_eta) per (kernel, d)"""
    constants = KernelConstants(kernel.name, d, surface_tension(kernel, d), total_mass(kernel, d))
    logger.debug("Kernel constants %s", constants.as_dict())
    return constants


def validate_conditions(kernel: RadialKernel, d: int) -> Dict:
    """Report of the positive-at-zero, non-increasing and finite-moment checks"""
    _check_dimension(d)
    report = {'kernel': kernel.name, 'd': d, 'positive_at_zero': True, 'non_increasing': True,
              'finite_moment': True, 'failures': []}

    at_zero = float(kernel(np.array(0.0)))
    near_zero = float(kernel(np.array(1e-9)))
    if not at_zero > 0 or abs(near_zero - at_zero) > 1e-6 * max(at_zero, 1.0):
        report['positive_at_zero'] = False
        report['failures'].append(f"positive at zero: eta(0) = {at_zero:.6g}, eta(1e-9) = {near_zero:.6g}")

    upper = 1.5 * kernel.support_radius if kernel.is_compact else 10.0
    grid = np.linspace(0.0, upper, MONOTONE_GRID_POINTS)
    values = kernel(grid)
    increases = np.diff(values) > 1e-14
    if np.any(increases):
        report['non_increasing'] = False
        first = int(np.argmax(increases))
        report['failures'].append(f"non-increasing: profile increases near t = {grid[first]:.6g}")

    try:
        moment = radial_moment(kernel, d + 1)
        report['moment'] = moment
    except KernelConditionError as e:
        report['finite_moment'] = False
        report['failures'].append(f"finite moment: {e}")

    report['passed'] = all(report[key] for key in ('positive_at_zero', 'non_increasing', 'finite_moment'))
    return report


def monte_carlo_constants(kernel: RadialKernel, d: int, samples: int = 10_000_000,
                          seed: int = 0, chunk: int = 1_000_000) -> Dict:
    """Monte-Carlo estimates of (sigma_eta, beta_eta) with standard errors over [-R,R]^d"""
    _check_dimension(d)
    if not kernel.is_compact:
        raise InvalidArgumentError("Monte-Carlo constants need a compactly supported kernel")
    rng = np.random.default_rng(seed)
    radius = kernel.support_radius
    box = (2.0 * radius) ** d
    sums = np.zeros(2)
    squares = np.zeros(2)
    drawn = 0
    while drawn < samples:
        size = min(chunk, samples - drawn)
        h = rng.uniform(-radius, radius, size=(size, d))
        eta = kernel(np.linalg.norm(h, axis=1)) * box
        terms = np.stack([eta * h[:, 0] ** 2, eta])
        sums += terms.sum(axis=1)
        squares += (terms ** 2).sum(axis=1)
        drawn += size
    means = sums / samples
    stderr = np.sqrt(np.maximum(squares / samples - means ** 2, 0.0) / samples)
    return {'sigma': float(means[0]), 'sigma_stderr': float(stderr[0]),
            'beta': float(means[1]), 'beta_stderr': float(stderr[1]), 'samples': samples}
