#!/usr/bin/env python3
"""
Graph and Laplacian Tests
Cell-list search against brute force, quadratic-form identities, rw correspondence and energies
"""

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose, assert_array_equal

from core.errors import InternalInvariantError, InvalidArgumentError, ResourceError
from core.geometry import Domain, PointCloud, sample, uniform_density
from core.kernels import INDICATOR, POLYNOMIAL
from graph.laplacian import (WeightedGraph, build_graph, connected_components, dirichlet_energy,
                             laplacian, normalized_dirichlet_energy, quadratic_form)
from graph.neighbors import brute_force_pairs, radius_pairs
from services.eigensolver import smallest_k


def random_graph(seed: int, n: int = 150, d: int = 2, eps: float = 0.2, kernel=POLYNOMIAL) -> WeightedGraph:
    domain = Domain.unit(d)
    cloud = sample(uniform_density(domain), domain, n, seed)
    return build_graph(cloud, kernel, eps)


class TestNeighborSearch:

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_brute_force(self, d):
        rng = np.random.default_rng(d)
        points = rng.random((400, d))
        fast = radius_pairs(points, 0.15)
        slow = brute_force_pairs(points, 0.15)
        for a, b in zip(fast, slow):
            assert_array_equal(a, b)

    def test_pairs_are_ordered(self):
        points = np.random.default_rng(0).random((200, 2))
        rows, cols, _ = radius_pairs(points, 0.2)
        assert np.all(rows < cols)
        assert np.all(np.diff(rows * 200 + cols) > 0)

    def test_single_point_has_no_pairs(self):
        rows, cols, dists = radius_pairs(np.array([[0.5, 0.5]]), 0.1)
        assert rows.size == cols.size == dists.size == 0

    def test_pair_budget(self):
        points = np.random.default_rng(0).random((500, 2))
        with pytest.raises(ResourceError):
            radius_pairs(points, 1.0, max_pairs=100)


class TestGraphConstruction:

    def test_weights_symmetric_with_diagonal(self, small_cloud):
        graph = build_graph(small_cloud, INDICATOR, 0.1)
        assert abs(graph.weights - graph.weights.T).max() == 0.0
        assert_allclose(graph.weights.diagonal(), 1.0 / 0.1 ** 2)
        assert_allclose(graph.degrees, np.asarray(graph.weights.sum(axis=1)).ravel())

    def test_without_diagonal(self, small_cloud):
        graph = build_graph(small_cloud, INDICATOR, 0.1, include_diagonal=False)
        assert np.all(graph.weights.diagonal() == 0.0)

    def test_large_eps_gives_complete_graph(self, small_cloud):
        graph = build_graph(small_cloud, INDICATOR, 2.0)
        assert graph.edge_count == small_cloud.n * (small_cloud.n - 1) // 2
        assert connected_components(graph)[0] == 1

    def test_tiny_eps_isolates_points(self, small_cloud):
        graph = build_graph(small_cloud, INDICATOR, 1e-9)
        assert connected_components(graph)[0] == small_cloud.n

    def test_memory_budget(self, small_cloud):
        with pytest.raises(ResourceError):
            build_graph(small_cloud, INDICATOR, 2.0, memory_budget=10_000)

    def test_eps_must_be_positive(self, small_cloud):
        with pytest.raises(InvalidArgumentError):
            build_graph(small_cloud, INDICATOR, 0.0)

    def test_triplets_upper_triangle(self, small_cloud):
        graph = build_graph(small_cloud, INDICATOR, 0.1)
        rows, cols, values = graph.triplets()
        assert np.all(rows <= cols)
        assert rows.shape[0] == graph.edge_count + graph.n


class TestLaplacianIdentities:

    @pytest.mark.parametrize("seed", range(100))
    def test_quadratic_forms(self, seed):
        graph = random_graph(seed, n=60 + 2 * seed)
        u = np.random.default_rng(seed).standard_normal(graph.n)
        coo = graph.weights.tocoo()
        pairwise = 0.5 * np.sum(coo.data * (u[coo.row] - u[coo.col]) ** 2)
        unnormalized = quadratic_form(laplacian(graph, 'unnormalized').matrix, u)
        assert unnormalized == pytest.approx(pairwise, rel=1e-12, abs=1e-12 * np.sum(coo.data))

        scaled = u / np.sqrt(graph.degrees)
        pairwise_sym = 0.5 * np.sum(coo.data * (scaled[coo.row] - scaled[coo.col]) ** 2)
        sym = quadratic_form(laplacian(graph, 'sym').matrix, u)
        assert sym == pytest.approx(pairwise_sym, rel=1e-12, abs=1e-14)

    def test_rw_correspondence(self):
        graph = random_graph(3)
        sym = laplacian(graph, 'sym')
        rw = laplacian(graph, 'rw')
        spectrum, basis = smallest_k(sym.matrix, 5)
        for j in range(5):
            u = basis.vectors[:, j] / np.sqrt(graph.degrees)
            residual = rw.matvec(u) - spectrum.values[j] * u
            assert np.linalg.norm(residual) <= 1e-8 * max(np.linalg.norm(u), 1.0)

    def test_rw_matvec_is_d_inverse_l(self):
        graph = random_graph(5)
        u = np.random.default_rng(5).standard_normal(graph.n)
        lap = laplacian(graph, 'unnormalized').matrix
        assert_allclose(laplacian(graph, 'rw').matvec(u), (lap @ u) / graph.degrees, rtol=1e-10, atol=1e-10)

    def test_constants_in_kernel_of_l(self, small_cloud):
        graph = build_graph(small_cloud, INDICATOR, 0.15)
        assert np.max(np.abs(laplacian(graph, 'unnormalized').matrix @ np.ones(graph.n))) < 1e-9

    def test_zero_degree_rejected_for_normalized(self):
        weights = sp.csr_matrix(np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
        graph = WeightedGraph.from_weights(weights)
        with pytest.raises(InternalInvariantError):
            laplacian(graph, 'sym')

    def test_unknown_kind(self, small_cloud):
        with pytest.raises(InvalidArgumentError):
            laplacian(build_graph(small_cloud, INDICATOR, 0.1), 'signless')


class TestEnergies:

    def test_graph_energy_matches_eigenvalue(self, small_cloud):
        # unit nu_n-norm eigenvector u of L: G_{n,eps}(u) = 2 lambda / (n eps^2)
        eps = 0.2
        graph = build_graph(small_cloud, INDICATOR, eps)
        spectrum, basis = smallest_k(laplacian(graph).matrix, 3)
        energy = dirichlet_energy(graph, basis.vectors[:, 1])
        assert energy == pytest.approx(2.0 * spectrum.values[1] / (graph.n * eps ** 2), rel=1e-10)

    def test_normalized_energy_matches_eigenvalue(self, small_cloud):
        # unit Euclidean eigenvector w of N^sym: G-bar(w sqrt(n)) = 2 tau / eps^2
        eps = 0.2
        graph = build_graph(small_cloud, INDICATOR, eps)
        spectrum, basis = smallest_k(laplacian(graph, 'sym').matrix, 3, weights=np.ones(graph.n))
        w = basis.vectors[:, 2]
        energy = normalized_dirichlet_energy(graph, w * np.sqrt(graph.n))
        assert energy == pytest.approx(2.0 * spectrum.values[2] / eps ** 2, rel=1e-10)

    def test_energy_of_constant_is_zero(self, small_cloud):
        graph = build_graph(small_cloud, INDICATOR, 0.2)
        assert dirichlet_energy(graph, np.full(graph.n, 3.0)) == 0.0

    def test_length_mismatch(self, small_cloud):
        graph = build_graph(small_cloud, INDICATOR, 0.2)
        with pytest.raises(InvalidArgumentError):
            dirichlet_energy(graph, np.zeros(graph.n + 1))


class TestComponents:

    def test_two_separated_blobs(self):
        rng = np.random.default_rng(0)
        left = rng.random((50, 2)) * 0.2
        right = rng.random((50, 2)) * 0.2 + 0.7
        cloud = PointCloud(np.vstack([left, right]), Domain.unit(2))
        count, labels = connected_components(build_graph(cloud, INDICATOR, 0.3))
        assert count == 2
        assert len(set(labels[:50])) == 1 and len(set(labels[50:])) == 1


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
