#!/usr/bin/env python3
"""
API Endpoints Tests
REST surface exercised in-process through the FastAPI test client
"""

import math

import pytest
from fastapi.testclient import TestClient

from api.server import app


@pytest.fixture
def client():
    with TestClient(app) as test_client:
        yield test_client


class TestServiceEndpoints:

    def test_root(self, client):
        response = client.get("/")
        assert response.status_code == 200
        data = response.json()
        assert data['status'] == 'operational'
        assert data['version'] == '1.0.0'
        assert 'convergence_sweeps' in data['capabilities']
        print(f"✅ Root endpoint test passed: {data['service']}")

    def test_health(self, client):
        data = client.get("/health").json()
        assert data['status'] == 'ok'
        assert data['overall_health'] == 'GREEN'
        assert data['budget_violations'] == 0
        assert data['uptime_seconds'] >= 0

    def test_metrics_after_requests(self, client):
        client.get("/")
        text = client.get("/metrics").text
        assert "# TYPE api_requests_total counter" in text
        assert "api_latency_root" in text

    def test_budget_dashboard(self, client):
        client.get("/kernels/indicator/constants", params={'d': 2})
        data = client.get("/metrics/budgets").json()
        assert 'kernel_constants_latency' in data['budgets']
        assert data['stages']['kernel_constants_latency']['count'] == 1


class TestKernelEndpoints:

    def test_list(self, client):
        kernels = client.get("/kernels").json()['kernels']
        assert 'indicator' in kernels
        assert kernels == sorted(kernels)

    @pytest.mark.parametrize("d,ratio", [(1, 1.0 / 3.0), (2, 0.25), (3, 0.2)])
    def test_indicator_constants(self, client, d, ratio):
        data = client.get("/kernels/indicator/constants", params={'d': d}).json()
        assert data['d'] == d
        assert data['sigma_over_beta'] == pytest.approx(ratio, rel=1e-6)
        assert data['conditions']['passed']

    def test_unknown_kernel(self, client):
        response = client.get("/kernels/epanechnikov/constants")
        assert response.status_code == 400
        assert response.json()['error'] == 'ConfigurationError'

    def test_dimension_out_of_range(self, client):
        assert client.get("/kernels/indicator/constants", params={'d': 4}).status_code == 422


class TestExperimentEndpoints:

    def test_sample_is_deterministic(self, client):
        body = {'n': 50, 'seed': 4, 'include_points': True}
        first = client.post("/experiments/sample", json=body).json()
        second = client.post("/experiments/sample", json=body).json()
        assert first['sha256'] == second['sha256']
        assert len(first['points']) == 50
        assert all(0.0 <= x <= 1.0 for point in first['points'] for x in point)
        other = client.post("/experiments/sample", json={'n': 50, 'seed': 5}).json()
        assert other['sha256'] != first['sha256']
        assert 'points' not in other

    def test_sample_in_one_dimension(self, client):
        body = {'n': 20, 'config': {'domain': {'lower': [0.0], 'upper': [2.0]}}}
        data = client.post("/experiments/sample", json=body).json()
        assert data['dimension'] == 1
        assert data['max'][0] <= 2.0

    def test_invalid_override(self, client):
        response = client.post("/experiments/sample", json={'n': 10, 'overrides': ['laplacian.kind=signless']})
        assert response.status_code == 400

    def test_continuum_square(self, client):
        data = client.post("/experiments/continuum", json={'k': 4, 'method': 'analytic'}).json()
        assert data['method'] == 'analytic'
        expected = [0.0, math.pi ** 2, math.pi ** 2, 2.0 * math.pi ** 2]
        assert data['eigenvalues'] == pytest.approx(expected, abs=1e-9)
        assert data['groups'] == [[0], [1, 2], [3]]

    def test_continuum_unknown_method(self, client):
        response = client.post("/experiments/continuum", json={'k': 2, 'method': 'spectral'})
        assert response.status_code == 400
        assert response.json()['error'] == 'InvalidArgumentError'

    def test_cluster_small_cloud(self, client):
        data = client.post("/experiments/cluster", json={'n': 200, 'seed': 1, 'include_labels': True}).json()
        assert data['kind'] == 'unnormalized'
        assert data['admissible'] is True
        assert len(data['labels']) == 200
        assert set(data['labels']) <= {0, 1}
        assert sum(data['cluster_masses']) + data['excluded_mass'] == pytest.approx(1.0)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
