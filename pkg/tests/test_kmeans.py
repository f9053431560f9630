#!/usr/bin/env python3
"""
Weighted K-Means Tests
Objective, restarts determinism, enumeration oracle, Voronoi ties and W2 stability
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.errors import InvalidArgumentError
from core.geometry import WeightedPointSet
from services.kmeans import (CenterSet, assign, centroid_residuals, enumerate_minimum, kmeans_plusplus,
                             minimize, objective, stability_check)
from services.transport import wasserstein2


def uniform_measure(points) -> WeightedPointSet:
    points = np.asarray(points, dtype=float)
    return WeightedPointSet(points, np.full(points.shape[0], 1.0 / points.shape[0]))


def random_measure(rng: np.random.Generator, size: int, d: int = 2) -> WeightedPointSet:
    weights = rng.random(size) + 0.1
    return WeightedPointSet(rng.random((size, d)), weights / weights.sum())


@pytest.fixture
def three_blobs():
    rng = np.random.default_rng(4)
    centers = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
    points = np.vstack([c + 0.2 * rng.standard_normal((40, 2)) for c in centers])
    return uniform_measure(points)


class TestObjective:

    def test_two_atoms(self):
        measure = uniform_measure([[0.0], [1.0]])
        assert objective(measure, [[0.5]]) == pytest.approx(0.25)
        assert objective(measure, [[0.0], [1.0]]) == 0.0

    def test_centers_must_be_finite(self):
        with pytest.raises(InvalidArgumentError):
            CenterSet(np.array([[np.nan, 0.0]]))

    def test_plusplus_picks_support_points(self, three_blobs, rng):
        centers = kmeans_plusplus(three_blobs.points, three_blobs.weights, 3, rng)
        for center in centers:
            assert np.any(np.all(three_blobs.points == center, axis=1))


class TestMinimize:

    def test_recovers_blob_centers(self, three_blobs):
        result = minimize(three_blobs, 3, seed=0)
        found = result.centers.canonical()
        assert_allclose(found, [[0.0, 0.0], [0.0, 5.0], [5.0, 0.0]], atol=0.15)
        assert result.unique

    def test_deterministic_given_seed(self, three_blobs):
        a = minimize(three_blobs, 3, restarts=8, seed=5)
        b = minimize(three_blobs, 3, restarts=8, seed=5)
        c = minimize(three_blobs, 3, restarts=8, seed=5, threads=4)
        assert np.array_equal(a.centers.centers, b.centers.centers)
        assert np.array_equal(a.centers.centers, c.centers.centers)
        assert a.value == c.value

    def test_k_one_is_the_mean(self, three_blobs):
        result = minimize(three_blobs, 1)
        assert_allclose(result.centers.centers[0], three_blobs.centroid(), atol=1e-12)

    def test_support_smaller_than_k(self):
        measure = uniform_measure([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        result = minimize(measure, 3)
        assert result.support_fits
        assert result.value == 0.0
        assert not result.unique

    def test_beats_random_center_sets(self, three_blobs):
        best = minimize(three_blobs, 3, seed=0).value
        rng = np.random.default_rng(17)
        for _ in range(1000):
            centers = rng.uniform(-1.0, 6.0, size=(3, 2))
            assert best <= objective(three_blobs, centers)

    def test_unit_square_corners(self):
        measure = uniform_measure([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        result = minimize(measure, 2, seed=3)
        # both pairs of opposite edge midpoints are minimizers, so only the value is compared
        assert result.value == pytest.approx(0.25, rel=1e-12)
        assert enumerate_minimum(measure, 2)[0] == pytest.approx(0.25, rel=1e-12)
        assert objective(measure, [[0.0, 0.5], [1.0, 0.5]]) == pytest.approx(0.25)
        assert objective(measure, [[0.5, 0.0], [0.5, 1.0]]) == pytest.approx(0.25)

    def test_jittered_support_converges(self):
        amplitudes = [1e-1, 1e-2, 1e-3, 1e-4]
        gaps = {a: [] for a in amplitudes}
        for seed in range(10):
            rng = np.random.default_rng(seed)
            measure = random_measure(rng, 8)
            exact, _ = enumerate_minimum(measure, 2)
            for a in amplitudes:
                jittered = WeightedPointSet(measure.points + rng.uniform(-a, a, measure.points.shape),
                                            measure.weights)
                gaps[a].append(abs(enumerate_minimum(jittered, 2)[0] - exact))
        medians = [np.median(gaps[a]) for a in amplitudes]
        assert all(b < a for a, b in zip(medians, medians[1:]))
        assert medians[-1] < 1e-3

    def test_invalid_arguments(self, three_blobs):
        with pytest.raises(InvalidArgumentError):
            minimize(three_blobs, 0)
        with pytest.raises(InvalidArgumentError):
            minimize(three_blobs, 2, restarts=0)


class TestEnumerationOracle:

    def test_separated_clusters(self):
        measure = uniform_measure([[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]])
        value, centers = enumerate_minimum(measure, 2)
        assert value == pytest.approx(0.04 / 6.0)
        assert minimize(measure, 2, seed=1).value == pytest.approx(value, rel=1e-9)

    def test_lloyd_never_beats_the_oracle(self):
        matches = 0
        for seed in range(20):
            measure = random_measure(np.random.default_rng(seed), 7)
            oracle, _ = enumerate_minimum(measure, 3)
            found = minimize(measure, 3, restarts=30, seed=seed).value
            assert found >= oracle - 1e-12
            matches += found <= oracle * (1.0 + 1e-9) + 1e-15
        assert matches >= 15

    def test_more_centers_strictly_lower(self):
        for seed in range(10):
            measure = random_measure(np.random.default_rng(100 + seed), 6)
            values = [enumerate_minimum(measure, k)[0] for k in range(1, 5)]
            assert all(b < a for a, b in zip(values, values[1:])), values

    def test_support_limit(self):
        with pytest.raises(InvalidArgumentError):
            enumerate_minimum(uniform_measure(np.arange(13.0)[:, None]), 2)


class TestAssignment:

    def test_ties_go_to_lowest_index(self):
        measure = uniform_measure([[0.0], [1.0], [2.0]])
        assignment = assign(measure, [[0.0], [2.0]])
        assert assignment.labels.tolist() == [0, 0, 1]
        assert assignment.tied_mass == pytest.approx(1.0 / 3.0)
        assert_allclose(assignment.masses, [2.0 / 3.0, 1.0 / 3.0])
        assert assignment.restricted[0].mass == pytest.approx(2.0 / 3.0)

    def test_centroid_residuals_vanish_at_lloyd_fixed_point(self, three_blobs):
        result = minimize(three_blobs, 3, seed=2, tol=0.0)
        report = centroid_residuals(three_blobs, result.centers)
        assert report['empty_cells'] == []
        assert np.all(report['residuals'] < 1e-10)

    def test_no_ties_on_continuous_samples(self):
        for seed in range(20):
            measure = uniform_measure(np.random.default_rng(seed).random((200, 2)))
            result = minimize(measure, 3, restarts=4, seed=seed)
            assert assign(measure, result.centers).tied_mass == 0.0

    def test_empty_cell_flagged(self):
        measure = uniform_measure([[0.0], [1.0]])
        report = centroid_residuals(measure, [[0.5], [100.0]])
        assert report['empty_cells'] == [1]
        assert np.isnan(report['residuals'][1])


class TestStability:

    def test_objective_gap_bounded_by_w2(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            mu = random_measure(rng, int(rng.integers(2, 9)))
            nu = random_measure(rng, int(rng.integers(2, 9)))
            d2, _ = wasserstein2(mu, nu)
            check = stability_check(mu, nu, rng.random((3, 2)), d2)
            assert check['holds'], check


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
