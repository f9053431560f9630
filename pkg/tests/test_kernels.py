#!/usr/bin/env python3
"""
Kernel Tests
Surface tension and mass constants, scaled evaluation and admissibility validation
"""

import math

import numpy as np
import pytest

from core.errors import ConfigurationError, KernelConditionError
from core.kernels import (INDICATOR, POLYNOMIAL, TRUNCATED_GAUSSIAN, RadialKernel, eval_scaled, get_kernel,
                          kernel_constants, monte_carlo_constants, radial_moment, surface_tension, total_mass,
                          validate_conditions)


class TestIndicatorConstants:

    @pytest.mark.parametrize("d, sigma, beta", [
        (1, 2.0 / 3.0, 2.0),
        (2, math.pi / 4.0, math.pi),
        (3, 4.0 * math.pi / 15.0, 4.0 * math.pi / 3.0),
    ])
    def test_closed_forms(self, d, sigma, beta):
        assert surface_tension(INDICATOR, d) == pytest.approx(sigma, abs=1e-6)
        assert total_mass(INDICATOR, d) == pytest.approx(beta, abs=1e-6)

    def test_ratio_in_the_plane(self):
        constants = kernel_constants(INDICATOR, 2)
        assert constants.ratio == pytest.approx(0.25, abs=1e-9)
        assert constants.as_dict()['sigma_over_beta'] == pytest.approx(0.25, abs=1e-9)

    def test_monte_carlo_agrees_within_three_stderr(self):
        estimate = monte_carlo_constants(INDICATOR, 2, samples=1_000_000, seed=0)
        assert abs(estimate['sigma'] - math.pi / 4.0) <= 3.0 * estimate['sigma_stderr']
        assert abs(estimate['beta'] - math.pi) <= 3.0 * estimate['beta_stderr']

    @pytest.mark.slow
    def test_monte_carlo_ten_million_samples(self):
        estimate = monte_carlo_constants(INDICATOR, 2, samples=10_000_000, seed=1)
        assert abs(estimate['sigma'] - math.pi / 4.0) <= 3.0 * estimate['sigma_stderr']


class TestOtherKernels:

    def test_polynomial_in_one_dimension(self):
        # int_{-1}^{1} (1 - h^2) h^2 dh = 4/15, int (1 - h^2) dh = 4/3
        constants = kernel_constants(POLYNOMIAL, 1)
        assert constants.sigma == pytest.approx(4.0 / 15.0, rel=1e-9)
        assert constants.beta == pytest.approx(4.0 / 3.0, rel=1e-9)

    def test_truncated_gaussian_close_to_full_gaussian(self):
        # full Gaussian exp(-|h|^2) in d=2: beta = pi, sigma = pi / 2
        constants = kernel_constants(TRUNCATED_GAUSSIAN, 2)
        assert constants.beta == pytest.approx(math.pi, rel=1e-3)
        assert constants.sigma == pytest.approx(math.pi / 2.0, rel=2e-3)

    def test_unknown_kernel(self):
        with pytest.raises(ConfigurationError):
            get_kernel('epanechnikov-2')


class TestScaledEvaluation:

    def test_scaling_by_eps(self):
        eps = 0.1
        inside = eval_scaled(INDICATOR, 2, eps, np.array([[0.05, 0.0]]))
        outside = eval_scaled(INDICATOR, 2, eps, np.array([[0.2, 0.0]]))
        assert inside[0] == pytest.approx(1.0 / eps ** 2)
        assert outside[0] == 0.0

    def test_boundary_is_inside(self):
        assert eval_scaled(INDICATOR, 1, 0.5, np.array([[0.5]]))[0] == pytest.approx(2.0)


class TestConditions:

    def test_built_in_kernels_pass(self):
        for kernel in (INDICATOR, POLYNOMIAL, TRUNCATED_GAUSSIAN):
            report = validate_conditions(kernel, 2)
            assert report['passed'], report['failures']

    def test_increasing_profile_fails_monotonicity(self):
        bump = RadialKernel('bump', lambda t: np.where(t <= 1.0, t + 0.1, 0.0), 1.0, (1.0,))
        report = validate_conditions(bump, 2)
        assert not report['non_increasing']
        assert not report['passed']

    def test_heavy_tail_fails_moment(self):
        heavy = RadialKernel('heavy', lambda t: 1.0 / (1.0 + t) ** 2)
        with pytest.raises(KernelConditionError):
            radial_moment(heavy, 3)
        assert not validate_conditions(heavy, 2)['finite_moment']


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
