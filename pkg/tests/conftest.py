#!/usr/bin/env python3
"""
Shared Test Fixtures
Domains, densities, small clouds and a clean metrics collector
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.config import load_config  # noqa: E402
from core.geometry import Domain, sample, uniform_density  # noqa: E402
from observers.metrics import metrics  # noqa: E402


@pytest.fixture
def unit_interval():
    return Domain.unit(1)


@pytest.fixture
def unit_square():
    return Domain.unit(2)


@pytest.fixture
def uniform_square(unit_square):
    return uniform_density(unit_square)


@pytest.fixture
def small_cloud(unit_square, uniform_square):
    return sample(uniform_square, unit_square, 300, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config(tmp_path):
    """Fast sweep configuration writing into a temporary directory"""
    return load_config(overrides=[
        'sweep.n_list=[200, 400]',
        'sweep.seeds=[0, 1]',
        'sweep.eigen_count=3',
        'schedule.exponent=0.5',
        'continuum.resolution=32',
        'transport.exact_budget=400',
        'transport.tl2_exact_max_n=200',
        'runtime.threads=2',
        f'report.out_dir={tmp_path}',
        'report.plots=false',
    ], use_env=False)


@pytest.fixture(autouse=True)
def clean_metrics():
    metrics.reset()
    yield
    metrics.reset()
