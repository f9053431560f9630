#!/usr/bin/env python3
"""
Experiment Pipeline Tests
Schedules, discrete spectral clustering, label matching, sweeps and connectivity
"""

import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.config import load_config
from core.errors import InvalidArgumentError
from core.geometry import Domain, PointCloud, WeightedPointSet, grid_discretize, uniform_density
from core.kernels import INDICATOR
from core.pipeline import (DEFAULT_CONNECTIVITY_SCHEDULES, cluster_distance_matrix, coarsen,
                           connectivity_experiment, convergence_sweep, critical_rate,
                           energy_expectation_check, epsilon_schedule, match_labels, prepare_context,
                           project, run_sweep, run_trial, spectral_cluster_discrete)
from graph.laplacian import build_graph


@pytest.fixture
def two_blob_cloud():
    rng = np.random.default_rng(0)
    left = rng.random((50, 2)) * 0.2
    right = rng.random((50, 2)) * 0.2 + 0.7
    return PointCloud(np.vstack([left, right]), Domain.unit(2))


class TestSchedules:

    def test_rates(self):
        n = 1000
        assert critical_rate(n, 1) == pytest.approx(math.log(n) / n)
        assert critical_rate(n, 2) == pytest.approx(math.log(n) ** 0.75 / math.sqrt(n))
        assert critical_rate(n, 3) == pytest.approx((math.log(n) / n) ** (1.0 / 3.0))

    def test_schedule_value_and_admissibility(self):
        eps, admissible = epsilon_schedule(1000, 2, 1.5, 0.9)
        assert eps == pytest.approx(1.5 * critical_rate(1000, 2) ** 0.9)
        assert admissible
        _, admissible = epsilon_schedule(1000, 2, 1.5, 1.0)
        assert not admissible

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_decreasing_in_n(self, d):
        values = [epsilon_schedule(n, d, 1.0, 0.8)[0] for n in (10, 100, 1000, 10_000)]
        assert all(b < a for a, b in zip(values, values[1:]))
        # eps_n / r(n) grows when the exponent is below one
        ratios = [epsilon_schedule(n, d, 1.0, 0.8)[0] / critical_rate(n, d) for n in (10, 100, 1000, 10_000)]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    def test_invalid_inputs(self):
        with pytest.raises(InvalidArgumentError):
            critical_rate(1, 2)
        with pytest.raises(InvalidArgumentError):
            critical_rate(100, 4)
        with pytest.raises(InvalidArgumentError):
            epsilon_schedule(100, 2, 0.0, 0.5)
        with pytest.raises(InvalidArgumentError):
            epsilon_schedule(100, 2, 1.0, -0.5)


class TestDiscreteClustering:

    @pytest.mark.parametrize("kind", ['unnormalized', 'sym', 'rw'])
    def test_separated_blobs(self, two_blob_cloud, kind):
        clustering = spectral_cluster_discrete(two_blob_cloud, INDICATOR, 0.3, kind, 2, seed=1)
        labels = clustering.assignment.labels
        assert clustering.components == 2
        assert len(set(labels[:50].tolist())) == 1
        assert len(set(labels[50:].tolist())) == 1
        assert labels[0] != labels[50]
        assert_allclose(clustering.assignment.masses, [0.5, 0.5])
        assert clustering.excluded_mass == 0.0
        assert clustering.spectrum.multiplicities[0] == 2

    def test_sym_and_rw_agree_on_constant_degree_lattice(self):
        side = np.linspace(0.05, 0.21, 5)
        block = np.stack(np.meshgrid(side, side, indexing='ij'), axis=-1).reshape(-1, 2)
        cloud = PointCloud(np.vstack([block, block + 0.6]), Domain.unit(2))
        assert np.ptp(build_graph(cloud, INDICATOR, 0.3).degrees) < 1e-9
        sym = spectral_cluster_discrete(cloud, INDICATOR, 0.3, 'sym', 2, seed=4).assignment.labels
        rw = spectral_cluster_discrete(cloud, INDICATOR, 0.3, 'rw', 2, seed=4).assignment.labels
        assert np.array_equal(sym, rw) or np.array_equal(sym, 1 - rw)
        assert len(set(sym[:25].tolist())) == 1 and sym[0] != sym[25]

    def test_single_cluster(self, small_cloud):
        clustering = spectral_cluster_discrete(small_cloud, INDICATOR, 0.2, 'unnormalized', 1)
        assert np.all(clustering.assignment.labels == 0)
        assert clustering.assignment.masses[0] == pytest.approx(1.0)

    def test_k_out_of_range(self, small_cloud):
        with pytest.raises(InvalidArgumentError):
            spectral_cluster_discrete(small_cloud, INDICATOR, 0.2, 'unnormalized', 0)
        with pytest.raises(InvalidArgumentError):
            spectral_cluster_discrete(small_cloud, INDICATOR, 0.2, 'unnormalized', small_cloud.n + 1)


class TestMatching:

    def test_optimal_over_all_permutations(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            cost = rng.random((4, 4))
            permutation, total = match_labels(cost)
            brute = min(sum(cost[i, p[i]] for i in range(4)) for p in itertools.permutations(range(4)))
            assert total == pytest.approx(brute)
            assert sorted(permutation.tolist()) == [0, 1, 2, 3]

    def test_project_keeps_span_members(self, rng):
        weights = np.full(30, 1.0 / 30)
        vectors = rng.standard_normal((30, 3))
        target = vectors @ np.array([0.5, -1.0, 2.0])
        assert_allclose(project(vectors, target, weights), target, atol=1e-10)
        assert project(vectors, np.column_stack([target, target]), weights).shape == (30, 2)

    def test_coarsen_keeps_mass(self, unit_square, uniform_square, small_cloud):
        grid = grid_discretize(uniform_square, unit_square, 8)
        measure = WeightedPointSet(small_cloud.points[:100], np.full(100, 0.004), mass=0.4)
        coarse = coarsen(measure, grid)
        assert coarse.mass == 0.4
        assert coarse.size <= 64
        assert all(any(np.allclose(p, c) for c in grid.centers) for p in coarse.points)

    def test_cluster_distances(self, unit_square, uniform_square):
        grid = grid_discretize(uniform_square, unit_square, 4)
        left = grid.centers[:, 0] < 0.5
        halves = [WeightedPointSet(grid.centers[left], grid.weights[left], mass=0.5),
                  WeightedPointSet(grid.centers[~left], grid.weights[~left], mass=0.5)]
        cost = cluster_distance_matrix(halves, halves, grid, budget=100)
        assert_allclose(np.diag(cost), 0.0, atol=1e-12)
        assert cost[0, 1] == pytest.approx(0.5)
        missing = cluster_distance_matrix([halves[0], None], halves, grid, budget=100)
        assert_allclose(missing[1], unit_square.diameter)


class TestSweep:

    @pytest.mark.asyncio
    async def test_small_sweep(self, small_config):
        result = await run_sweep(small_config)
        assert [(r.n, r.seed) for r in result.records] == [(200, 0), (200, 1), (400, 0), (400, 1)]
        assert result.reference_groups == [[0], [1, 2]]
        assert result.reference_scaled[1] == pytest.approx(math.pi ** 3 / 4.0, rel=1e-6)
        for record in result.records:
            assert record.error is None
            assert record.admissible
            assert len(record.eigenvalues) == 3
            assert record.rescaled[0] == pytest.approx(0.0, abs=1e-8)
            assert all(np.isfinite(record.subspace_tl2))
            assert record.tl2_method == ('exact' if record.n <= 200 else 'map')
            assert record.sample_seed == record.seed + (0 if record.n == 200 else 1)
            assert record.projection_tl2 is not None and record.projection_tl2 >= 0.0
            assert record.components >= 1

    def test_trials_are_deterministic(self, small_config):
        context = prepare_context(small_config)
        a = run_trial(context, 200, 0, 0)
        b = run_trial(context, 200, 0, 0)
        assert a.eigenvalues == b.eigenvalues
        assert a.subspace_tl2 == b.subspace_tl2

    def test_rejects_sub_critical_exponent(self, small_config):
        config = small_config.model_copy(deep=True)
        config.schedule.exponent = 1.0
        with pytest.raises(InvalidArgumentError):
            convergence_sweep(config)

    def test_cluster_comparison(self, tmp_path):
        config = load_config(overrides=[
            'sweep.n_list=[300]', 'sweep.seeds=[0]', 'sweep.eigen_count=2',
            'sweep.compare_eigenvectors=false', 'sweep.compare_clusters=true',
            'schedule.exponent=0.5', 'continuum.resolution=32', 'continuum.cluster_resolution=16',
            'transport.exact_budget=400', 'runtime.threads=1', f'report.out_dir={tmp_path}',
        ], use_env=False)
        result = convergence_sweep(config)
        record = result.records[0]
        assert record.error is None
        assert sorted(record.cluster_permutation) == [0, 1]
        assert 0.0 <= record.cluster_w2_total < 2.0 * math.sqrt(2.0)
        assert result.continuum_unique is not None


class TestConnectivity:

    def test_extreme_schedules(self, small_config):
        config = small_config.model_copy(deep=True)
        config.sweep.seeds = [0, 1, 2, 3, 4]
        rows = connectivity_experiment(config)
        assert len(rows) == 4
        below = [r for r in rows if r['prefactor'] == DEFAULT_CONNECTIVITY_SCHEDULES[0].prefactor]
        above = [r for r in rows if r['prefactor'] == DEFAULT_CONNECTIVITY_SCHEDULES[1].prefactor]
        assert all(r['frequency'] == 1.0 for r in below)
        assert all(r['frequency'] == 0.0 for r in above)
        assert all(r['trials'] == 5 and r['failed'] == 0 and not r['admissible'] for r in rows)


class TestEnergyExpectation:

    def test_graph_energy_mean_matches_nonlocal(self, small_config):
        report = energy_expectation_check(small_config, 300, 0.2, range(20))
        assert report['seeds'] == 20
        tolerance = 4.0 * report['graph_stderr'] + 0.03 * report['expected']
        assert abs(report['graph_mean'] - report['expected']) <= tolerance


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
