#!/usr/bin/env python3
"""
Experiments Router
Sampling, discrete clustering, convergence sweeps, connectivity runs and continuum spectra over HTTP
"""

import asyncio
import hashlib
import logging
from typing import Any, Dict, List, Optional

import numpy as np
from fastapi import APIRouter
from pydantic import BaseModel, Field

from core import pipeline
from core.config import ExperimentConfig, load_config
from core.errors import InvalidArgumentError
from core.geometry import build_density, sample
from core.kernels import get_kernel
from core.report import compute_medians, jsonable, record_rows, render_csv
from observers.metrics import LatencyTimer, metrics
from services.continuum import (ContinuumOperator, analytic_solution, courant_fischer_check,
                                fd_weighted_eigs)

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/experiments", tags=["experiments"])

MAX_RETURNED_POINTS = 10_000


class ExperimentRequest(BaseModel):
    # partial configuration document merged over the defaults
    config: Dict[str, Any] = Field(default_factory=dict)
    overrides: List[str] = Field(default_factory=list)


class SampleRequest(ExperimentRequest):
    n: int = Field(1000, ge=1)
    seed: int = 0
    include_points: bool = False


class ClusterRequest(ExperimentRequest):
    n: int = Field(1000, ge=2)
    seed: int = 0
    eps: Optional[float] = Field(None, gt=0)
    include_labels: bool = False


class SweepRequest(ExperimentRequest):
    include_rows: bool = False


class ContinuumRequest(ExperimentRequest):
    k: int = Field(4, ge=1)
    method: str = 'auto'
    courant_fischer_trials: int = Field(0, ge=0)


def _config(request: ExperimentRequest) -> ExperimentConfig:
    return load_config(overrides=request.overrides, extra=request.config)


async def _run(func, *args):
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(None, func, *args)


def _sample(config: ExperimentConfig, n: int, seed: int, include_points: bool) -> Dict:
    domain = pipeline.build_domain(config)
    density = build_density(config.density.name, domain, config.density.params)
    cloud = sample(density, domain, n, seed)
    response = {
        'n': cloud.n,
        'dimension': cloud.dimension,
        'seed': seed,
        'density': density.name,
        'mean': cloud.points.mean(axis=0).tolist(),
        'min': cloud.points.min(axis=0).tolist(),
        'max': cloud.points.max(axis=0).tolist(),
        'sha256': hashlib.sha256(np.ascontiguousarray(cloud.points).tobytes()).hexdigest(),
    }
    if include_points:
        if n > MAX_RETURNED_POINTS:
            raise InvalidArgumentError(f"include_points is limited to n <= {MAX_RETURNED_POINTS}")
        response['points'] = cloud.points.tolist()
    return response


def _cluster(config: ExperimentConfig, request: ClusterRequest) -> Dict:
    domain = pipeline.build_domain(config)
    density = build_density(config.density.name, domain, config.density.params)
    kernel = get_kernel(config.kernel.name)
    eps = request.eps
    admissible = None
    if eps is None:
        eps, admissible = pipeline.epsilon_schedule(request.n, domain.dimension, config.schedule.prefactor,
                                                    config.schedule.exponent)
    cloud = sample(density, domain, request.n, request.seed)
    clustering = pipeline.spectral_cluster_discrete(
        cloud, kernel, eps, config.laplacian.kind, config.clustering.k,
        restarts=config.clustering.restarts, seed=request.seed,
        include_diagonal=config.graph.include_diagonal, solver=config.solver.model_dump())
    assignment = clustering.assignment
    response = {
        'n': request.n,
        'eps': eps,
        'admissible': admissible,
        'kind': config.laplacian.kind,
        'components': clustering.components,
        'eigenvalues': clustering.spectrum.values.tolist(),
        'groups': [list(g) for g in clustering.spectrum.groups],
        'cluster_masses': assignment.masses.tolist(),
        'centers': assignment.centers.centers.tolist(),
        'objective': clustering.result.value,
        'unique_minimum': clustering.result.unique,
        'excluded_mass': clustering.excluded_mass,
    }
    if request.include_labels:
        response['labels'] = assignment.labels.tolist()
    return jsonable(response)


def _sweep_summary(config: ExperimentConfig, include_rows: bool) -> Dict:
    result = pipeline.convergence_sweep(config)
    rows = record_rows(result.records, config.report.timing_in_csv)
    text = render_csv(rows)
    response = {
        'trials': len(result.records),
        'failures': [{'n': r.n, 'seed': r.seed, 'error': r.error} for r in result.records if r.error],
        'kernel_constants': result.constants.as_dict(),
        'reference': result.reference_scaled,
        'medians': compute_medians(rows),
        'csv_sha256': hashlib.sha256(text.encode('utf-8')).hexdigest(),
    }
    if include_rows:
        response['rows'] = rows
    return jsonable(response)


def _continuum(config: ExperimentConfig, request: ContinuumRequest) -> Dict:
    domain = pipeline.build_domain(config)
    density = build_density(config.density.name, domain, config.density.params)
    operator = ContinuumOperator.for_laplacian(config.laplacian.kind, density, domain)
    resolution = config.continuum.fd_resolution(domain.dimension)
    method = request.method
    if method == 'auto':
        method = 'analytic' if density.is_constant else 'fd'
    if method == 'analytic':
        solution = analytic_solution(operator, request.k, resolution)
    elif method == 'fd':
        solution = fd_weighted_eigs(operator, resolution, request.k)
    else:
        raise InvalidArgumentError(f"Unknown continuum method '{request.method}', expected auto, analytic or fd")
    response = {
        'operator': operator.kind,
        'method': solution.method,
        'resolution': list(solution.grid.resolution),
        'eigenvalues': solution.spectrum.values.tolist(),
        'groups': [list(g) for g in solution.spectrum.groups],
    }
    if request.courant_fischer_trials:
        if solution.stiffness is None:
            solution = fd_weighted_eigs(operator, resolution, request.k)
        response['courant_fischer'] = [
            courant_fischer_check(solution, j, trials=request.courant_fischer_trials)
            for j in range(1, request.k + 1)]
    return jsonable(response)


@router.post("/sample")
async def sample_cloud(request: SampleRequest):
    """Draw an i.i.d. cloud from the configured density"""
    with LatencyTimer('api_sample_latency'):
        config = _config(request)
        result = await _run(_sample, config, request.n, request.seed, request.include_points)
        metrics.increment_counter('clouds_sampled_total')
        return result


@router.post("/cluster")
async def cluster_cloud(request: ClusterRequest):
    """Discrete spectral clustering of one sampled cloud"""
    with LatencyTimer('api_cluster_latency'):
        config = _config(request)
        result = await _run(_cluster, config, request)
        metrics.increment_counter('clusterings_total')
        return result


@router.post("/sweep")
async def run_sweep(request: SweepRequest):
    """Convergence sweep over (n, seed); medians and CSV digest in the response"""
    config = _config(request)
    logger.info("🚀 Sweep requested over n=%s", config.sweep.n_list)
    with LatencyTimer('api_sweep_latency'):
        result = await _run(_sweep_summary, config, request.include_rows)
    metrics.increment_counter('sweeps_total')
    return result


@router.post("/connectivity")
async def run_connectivity(request: ExperimentRequest):
    """Disconnection frequency per (n, schedule)"""
    config = _config(request)
    with LatencyTimer('api_connectivity_latency'):
        rows = await _run(pipeline.connectivity_experiment, config)
    metrics.increment_counter('connectivity_runs_total')
    return {'rows': jsonable(rows)}


@router.post("/continuum")
async def continuum_spectrum(request: ContinuumRequest):
    """Reference Neumann spectrum for the configured density and Laplacian kind"""
    config = _config(request)
    with LatencyTimer('api_continuum_latency'):
        return await _run(_continuum, config, request)
