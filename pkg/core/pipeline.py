#!/usr/bin/env python3
"""
Experiment Pipeline
Discrete spectral clustering, eps schedules, convergence sweeps and connectivity runs
"""

import asyncio
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from core.config import ExperimentConfig, ScheduleEntry
from core.errors import InvalidArgumentError, ResourceError, SpecLabError
from core.geometry import (DensityField, Domain, GridMeasure, PointCloud, WeightedPointSet, build_density,
                           derive_seed, grid_discretize, sample)
from core.kernels import KernelConstants, RadialKernel, get_kernel, kernel_constants
from graph.laplacian import build_graph, connected_components, dirichlet_energy, laplacian
from observers.metrics import LatencyTimer
from services import kmeans
from services.continuum import (ContinuumClustering, ContinuumOperator, ContinuumSolution,
                                continuum_reference, continuum_spectral_clustering, nonlocal_energy,
                                spectral_embedding)
from services.eigensolver import (EigenBasis, Spectrum, fix_signs, group_eigenvalues, rescale, rw_from_sym,
                                  smallest_k, subspace_distance)
from services.transport import infinity_matching, tl2_distance, tl2_via_map, wasserstein2

logger = logging.getLogger(__name__)

# extra reference eigenvalues so the last requested group is never cut
REFERENCE_MARGIN = 8
# below and above the connectivity threshold at the critical rate
DEFAULT_CONNECTIVITY_SCHEDULES = (ScheduleEntry(prefactor=0.3, exponent=1.0),
                                  ScheduleEntry(prefactor=2.0, exponent=1.0))


# Schedules

def critical_rate(n: int, d: int) -> float:
    """(log n)^{3/4} / n^{1/2} for d = 2, (log n / n)^{1/d} otherwise"""
    if n < 2:
        raise InvalidArgumentError(f"Schedules need n >= 2, got {n}")
    if d == 2:
        return math.log(n) ** 0.75 / math.sqrt(n)
    if d in (1, 3):
        return (math.log(n) / n) ** (1.0 / d)
    raise InvalidArgumentError(f"Dimension must be 1, 2 or 3, got {d}")


def epsilon_schedule(n: int, d: int, prefactor: float, exponent: float) -> Tuple[float, bool]:
    """eps_n = c * r(n)^theta and whether theta < 1 (eps_n / r(n) -> infinity)"""
    if prefactor <= 0:
        raise InvalidArgumentError(f"Schedule prefactor must be positive, got {prefactor}")
    if exponent <= 0:
        raise InvalidArgumentError(f"Schedule exponent must be positive, got {exponent}")
    eps = prefactor * critical_rate(n, d) ** exponent
    return float(eps), exponent < 1.0


# Discrete spectral clustering

@dataclass
class DiscreteClustering:
    spectrum: Spectrum
    basis: EigenBasis
    assignment: kmeans.ClusterAssignment
    result: kmeans.KMeansResult
    excluded_mass: float
    components: int


def discrete_eigenpairs(graph, kind: str, count: int, solver: Optional[Dict] = None,
                        reference: Optional[np.ndarray] = None) -> Tuple[Spectrum, EigenBasis]:
    """First `count` eigenpairs of L, N^sym or N^rw (rw from the symmetric conjugate)"""
    solver = solver or {}
    operator = laplacian(graph, kind)
    weights = np.full(graph.n, 1.0 / graph.n)
    sym_reference = None if kind == 'rw' else reference
    spectrum, basis = smallest_k(
        operator.matrix, count, weights=weights,
        dense_threshold=solver.get('dense_threshold', 512), rtol=solver.get('rtol', 1e-8),
        max_iter=solver.get('max_iter', 2000), group_rtol=solver.get('group_rtol', 1e-6),
        adaptive=solver.get('adaptive_grouping', True), reference=sym_reference)
    if kind == 'rw':
        basis = rw_from_sym(basis, graph.degrees)
        if reference is not None:
            basis = EigenBasis(fix_signs(basis.vectors, basis.weights, reference), basis.weights,
                               basis.spectrum, basis.residuals, orthonormal=False)
    return spectrum, basis


def cluster_embedding(cloud: PointCloud, basis: EigenBasis, kind: str, k: int, restarts: int = 20,
                      seed: int = 0, max_iter: int = 300, tol: float = 1e-12
                      ) -> Tuple[kmeans.ClusterAssignment, kmeans.KMeansResult, float]:
    """Weighted k-means on y_i = (u_1..u_k)(x_i), rows normalized for the sym kind"""
    embedding, kept = spectral_embedding(basis.vectors[:, :k], normalized_rows=(kind == 'sym'))
    n = cloud.n
    weights = np.full(n, 1.0 / n)
    excluded_mass = float(weights[~kept].sum())
    embedded = WeightedPointSet(embedding[kept], weights[kept], mass=float(weights[kept].sum()))
    result = kmeans.minimize(embedded, k, restarts=restarts, seed=seed, max_iter=max_iter, tol=tol)
    labels = np.full(n, -1, dtype=np.int64)
    labels[kept] = kmeans.assign(embedded, result.centers).labels
    masses = np.array([weights[labels == j].sum() for j in range(k)])
    restricted = tuple(
        WeightedPointSet(cloud.points[labels == j], weights[labels == j], mass=float(masses[j]))
        if masses[j] > 0 else None
        for j in range(k))
    assignment = kmeans.ClusterAssignment(labels, result.centers, masses, restricted,
                                          excluded_mass=excluded_mass)
    return assignment, result, excluded_mass


def spectral_cluster_discrete(cloud: PointCloud, kernel: RadialKernel, eps: float, kind: str, k: int,
                              restarts: int = 20, seed: int = 0, include_diagonal: bool = True,
                              solver: Optional[Dict] = None) -> DiscreteClustering:
    """Graph -> first k eigenvectors -> (row-normalized) embedding -> k-means -> restricted measures"""
    if k < 1 or k > cloud.n:
        raise InvalidArgumentError(f"Need 1 <= k <= n, got k = {k}, n = {cloud.n}")
    graph = build_graph(cloud, kernel, eps, include_diagonal=include_diagonal)
    components, _ = connected_components(graph)
    spectrum, basis = discrete_eigenpairs(graph, kind, k, solver)
    assignment, result, excluded = cluster_embedding(cloud, basis, kind, k, restarts, seed)
    return DiscreteClustering(spectrum, basis, assignment, result, excluded, components)


def match_labels(cost: np.ndarray) -> Tuple[np.ndarray, float]:
    """Min-cost perfect matching of discrete to continuum clusters"""
    cost = np.asarray(cost, dtype=float)
    rows, cols = linear_sum_assignment(cost)
    permutation = np.empty(cost.shape[0], dtype=np.int64)
    permutation[rows] = cols
    return permutation, float(cost[rows, cols].sum())


def project(vectors: np.ndarray, target: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """w-orthogonal projection of target (vector or columns) onto span(vectors)"""
    root = np.sqrt(weights)[:, None]
    target = np.asarray(target, dtype=float)
    flat = target.ndim == 1
    target = target[:, None] if flat else target
    coefficients, *_ = np.linalg.lstsq(root * vectors, root * target, rcond=None)
    projected = vectors @ coefficients
    return projected[:, 0] if flat else projected


def coarsen(measure: WeightedPointSet, grid: GridMeasure) -> WeightedPointSet:
    """Move each atom to its grid cell center and merge, keeping the total mass"""
    lower = np.asarray(grid.domain.lower)
    cells = np.floor((measure.points - lower) / grid.spacing).astype(np.int64)
    cells = np.clip(cells, 0, np.asarray(grid.resolution) - 1)
    flat = np.ravel_multi_index(cells.T, grid.resolution)
    occupied, inverse = np.unique(flat, return_inverse=True)
    weights = np.bincount(inverse, weights=measure.weights)
    return WeightedPointSet(grid.centers[occupied], weights, measure.mass)


def cluster_distance_matrix(discrete: Sequence[Optional[WeightedPointSet]],
                            continuum: Sequence[Optional[WeightedPointSet]],
                            grid: GridMeasure, budget: int) -> np.ndarray:
    """W2 between mass-normalized restricted measures; missing clusters cost the domain diameter"""
    k = len(discrete)
    cost = np.full((k, k), grid.domain.diameter)
    for i, j in itertools.product(range(k), range(k)):
        a, b = discrete[i], continuum[j]
        if a is None or b is None:
            continue
        coarse = coarsen(a, grid).normalized()
        distance, _ = wasserstein2(coarse, b.normalized(), budget)
        cost[i, j] = distance
    return cost


# Sweep

@dataclass
class SweepRecord:
    n: int
    seed: int
    sample_seed: int
    eps: float
    kind: str
    admissible: bool
    eigenvalues: List[float] = field(default_factory=list)
    rescaled: List[float] = field(default_factory=list)
    references: List[float] = field(default_factory=list)
    rel_errors: List[float] = field(default_factory=list)
    subspace_tl2: List[float] = field(default_factory=list)
    subspace_distance: List[float] = field(default_factory=list)
    tl2_method: str = ''
    projection_tl2: Optional[float] = None
    inner_product_gap: Optional[float] = None
    sup_displacement: Optional[float] = None
    cluster_w2_total: Optional[float] = None
    cluster_mass_gap: Optional[float] = None
    cluster_permutation: Optional[List[int]] = None
    components: int = 0
    wall_ms: float = 0.0
    stage_ms: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class SweepContext:
    """Everything shared read-only by the trials of one sweep"""
    config: ExperimentConfig
    domain: Domain
    density: DensityField
    kernel: RadialKernel
    constants: KernelConstants
    reference: ContinuumSolution
    reference_groups: Tuple[Tuple[int, ...], ...]
    reference_scaled: np.ndarray
    continuum_clustering: Optional[ContinuumClustering] = None


@dataclass
class SweepResult:
    config: ExperimentConfig
    constants: KernelConstants
    records: List[SweepRecord]
    reference_scaled: List[float]
    reference_groups: List[List[int]]
    continuum_unique: Optional[bool] = None
    continuum_minima: int = 0
    reference_ms: float = 0.0


def build_domain(config: ExperimentConfig) -> Domain:
    return Domain(tuple(config.domain.lower), tuple(config.domain.upper))


def reference_factor(kind: str, constants: KernelConstants) -> float:
    """sigma_eta for L, sigma_eta / beta_eta for the normalized Laplacians"""
    return constants.sigma if kind == 'unnormalized' else constants.ratio


def prepare_context(config: ExperimentConfig) -> SweepContext:
    """Continuum reference, kernel constants and (optionally) the continuum clustering"""
    domain = build_domain(config)
    density = build_density(config.density.name, domain, config.density.params)
    kernel = get_kernel(config.kernel.name)
    d = domain.dimension
    with LatencyTimer('kernel_constants_latency'):
        constants = kernel_constants(kernel, d)

    kind = config.laplacian.kind
    operator = ContinuumOperator.for_laplacian(kind, density, domain)
    count = config.sweep.eigen_count
    if config.sweep.compare_clusters:
        count = max(count, config.clustering.k)
    with LatencyTimer('continuum_reference_latency'):
        reference = continuum_reference(operator, count + REFERENCE_MARGIN,
                                        config.continuum.fd_resolution(d), seed=0)
    groups = group_eigenvalues(reference.spectrum.values, config.solver.group_rtol,
                               adaptive=not density.is_constant)
    complete = tuple(g for g in groups if g[-1] < count)
    scaled = reference_factor(kind, constants) * reference.spectrum.values[:count]

    clustering = None
    if config.sweep.compare_clusters:
        coarse = resample(reference, config.continuum.cluster_resolution)
        clustering = continuum_spectral_clustering(
            coarse, config.clustering.k, normalized_rows=(kind == 'sym'),
            restarts=config.clustering.restarts, seed=0)
        if not clustering.result.unique:
            logger.warning("⚠️  Continuum clustering has %d distinct minimizers; cluster distances use the best",
                           len(clustering.result.minima))
    return SweepContext(config, domain, density, kernel, constants, reference, complete, scaled, clustering)


def resample(solution: ContinuumSolution, resolution) -> ContinuumSolution:
    """Eigenfunctions evaluated on another midpoint grid"""
    grid = grid_discretize(solution.operator.density, solution.operator.domain, resolution)
    vectors = solution.evaluate(grid.centers, range(solution.basis.k))
    basis = EigenBasis(vectors, grid.weights, solution.spectrum, orthonormal=False)
    return ContinuumSolution(solution.operator, solution.spectrum, basis, grid,
                             solution.method + '-resampled', solution.evaluators)


def _transport_grid(context: SweepContext, n: int, exact: bool) -> GridMeasure:
    """Grid for eigenvector comparisons: >= n cells for matching, within budget for exact TL2"""
    d = context.domain.dimension
    per_axis = int(math.ceil((2 * n) ** (1.0 / d)))
    if exact:
        per_axis = min(per_axis, int(math.floor(context.config.transport.exact_budget ** (1.0 / d))))
    return grid_discretize(context.density, context.domain, max(per_axis, 2))


def _compare_eigenvectors(context: SweepContext, cloud: PointCloud, basis: EigenBasis,
                          record: SweepRecord) -> None:
    config = context.config
    n = cloud.n
    count = basis.k
    weights = np.full(n, 1.0 / n)
    use_exact = n <= config.transport.tl2_exact_max_n
    matching_grid = _transport_grid(context, n, exact=False)
    transport_map, sup_displacement = infinity_matching(matching_grid, cloud)
    record.sup_displacement = sup_displacement
    exact_grid = _transport_grid(context, n, exact=True) if use_exact else None
    record.tl2_method = 'exact' if use_exact else 'map'

    record.subspace_tl2 = [float('nan')] * count
    record.subspace_distance = [float('nan')] * count
    projection_values = []
    test_function_nodes = np.sum(cloud.points ** 2, axis=1)
    test_function_grid = np.sum(matching_grid.centers ** 2, axis=1)
    for group in context.reference_groups:
        members = list(group)
        continuum_nodes = context.reference.evaluate(cloud.points, members)
        discrete = basis.vectors[:, members]
        distance = subspace_distance(continuum_nodes, discrete, weights)

        # best-aligned discrete vectors: the sign-aligned vector itself, or the projection
        # of each continuum function onto the discrete group eigenspace
        aligned = discrete if len(members) == 1 else project(discrete, continuum_nodes, weights)

        values = []
        for j, index in enumerate(members):
            if use_exact:
                continuum_grid = context.reference.evaluate(exact_grid.centers, [index])[:, 0]
                value, _ = tl2_distance(exact_grid.as_point_set(), continuum_grid,
                                        WeightedPointSet(cloud.points, weights), aligned[:, j],
                                        config.transport.exact_budget)
            else:
                continuum_grid = context.reference.evaluate(matching_grid.centers, [index])[:, 0]
                value = tl2_via_map(transport_map, continuum_grid, aligned[:, j])
            values.append(value)
        for index in members:
            record.subspace_tl2[index] = float(max(values))
            record.subspace_distance[index] = distance

        # eigenprojection proxy for a fixed smooth test function
        if members[0] > 0 and not projection_values:
            continuum_grid_group = context.reference.evaluate(matching_grid.centers, members)
            continuum_projection = project(continuum_grid_group, test_function_grid, matching_grid.weights)
            discrete_projection = project(discrete, test_function_nodes, weights)
            projection_values.append(tl2_via_map(transport_map, continuum_projection, discrete_projection))
    record.projection_tl2 = projection_values[0] if projection_values else None

    # inner-product continuity on the first few continuum eigenfunctions
    first = list(range(min(3, context.reference.basis.k)))
    nodes = context.reference.evaluate(cloud.points, first)
    empirical = nodes.T @ (weights[:, None] * nodes)
    continuum = context.reference.basis.gram()[np.ix_(first, first)]
    record.inner_product_gap = float(np.max(np.abs(empirical - continuum)))


def _compare_clusters(context: SweepContext, cloud: PointCloud, basis: EigenBasis,
                      record: SweepRecord, seed: int) -> None:
    config = context.config
    k = config.clustering.k
    assignment, _, _ = cluster_embedding(cloud, basis, config.laplacian.kind, k,
                                         config.clustering.restarts, seed,
                                         config.clustering.max_iter, config.clustering.tol)
    continuum = context.continuum_clustering
    cost = cluster_distance_matrix(assignment.restricted, continuum.assignment.restricted,
                                   continuum.grid, config.transport.exact_budget)
    permutation, total = match_labels(cost)
    record.cluster_w2_total = total
    record.cluster_permutation = [int(p) for p in permutation]
    record.cluster_mass_gap = float(np.sum(np.abs(assignment.masses - continuum.assignment.masses[permutation])))


def run_trial(context: SweepContext, n: int, seed: int, n_index: int) -> SweepRecord:
    """sample -> graph -> eigen -> rescale -> compare against the continuum reference"""
    config = context.config
    d = context.domain.dimension
    kind = config.laplacian.kind
    eps, admissible = epsilon_schedule(n, d, config.schedule.prefactor, config.schedule.exponent)
    sample_seed = derive_seed(seed, n_index)
    record = SweepRecord(n=n, seed=seed, sample_seed=sample_seed, eps=eps, kind=kind, admissible=admissible)
    count = config.sweep.eigen_count
    if config.sweep.compare_clusters:
        count = max(count, config.clustering.k)

    with LatencyTimer('sweep_trial_latency') as trial_timer:
        try:
            cloud = sample(context.density, context.domain, n, sample_seed)
            with LatencyTimer('graph_build_latency') as timer:
                graph = build_graph(cloud, context.kernel, eps, config.graph.include_diagonal,
                                    config.graph.memory_budget_bytes)
                record.components, _ = connected_components(graph)
            record.stage_ms['graph'] = timer.elapsed_ms

            reference_nodes = context.reference.evaluate(cloud.points, range(count))
            with LatencyTimer('eigensolver_latency') as timer:
                spectrum, basis = discrete_eigenpairs(graph, kind, count, config.solver.model_dump(),
                                                      reference=reference_nodes)
            record.stage_ms['eigen'] = timer.elapsed_ms

            record.eigenvalues = [float(v) for v in spectrum.values]
            record.rescaled = [float(v) for v in rescale(spectrum.values, n, eps, kind)]
            record.references = [float(v) for v in context.reference_scaled[:count]]
            record.rel_errors = [
                abs(r - ref) / abs(ref) if ref != 0 else abs(r)
                for r, ref in zip(record.rescaled, record.references)]

            if config.sweep.compare_eigenvectors:
                with LatencyTimer('transport_latency') as timer:
                    _compare_eigenvectors(context, cloud, basis, record)
                record.stage_ms['transport'] = timer.elapsed_ms
            if config.sweep.compare_clusters and context.continuum_clustering is not None:
                with LatencyTimer('cluster_latency') as timer:
                    _compare_clusters(context, cloud, basis, record, sample_seed)
                record.stage_ms['clusters'] = timer.elapsed_ms
        except SpecLabError as e:
            record.error = f"{type(e).__name__}: {e}"
            logger.error("❌ Trial n=%d seed=%d failed: %s", n, seed, record.error)
    record.wall_ms = trial_timer.elapsed_ms
    if record.error is None:
        logger.info("✅ Trial n=%d seed=%d eps=%.4g components=%d (%.0f ms)",
                    n, seed, eps, record.components, record.wall_ms)
    return record


async def run_sweep(config: ExperimentConfig, threads: Optional[int] = None) -> SweepResult:
    """Trials over (n, seed) on a thread pool; records collected through one queue"""
    if config.schedule.exponent >= 1.0:
        raise InvalidArgumentError(
            f"Schedule exponent {config.schedule.exponent} >= 1 is sub-critical; "
            f"only the connectivity experiment accepts it")

    loop = asyncio.get_running_loop()
    threads = threads or config.runtime.threads
    logger.info("🚀 Sweep over n=%s seeds=%s kind=%s (%d threads)",
                config.sweep.n_list, config.sweep.seeds, config.laplacian.kind, threads)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        with LatencyTimer('sweep_reference_latency') as timer:
            context = await loop.run_in_executor(pool, prepare_context, config)
        queue: asyncio.Queue = asyncio.Queue()

        async def produce(n_index: int, n: int, seed: int):
            record = await loop.run_in_executor(pool, run_trial, context, n, seed, n_index)
            await queue.put(record)

        trials = [(i, n, s) for i, n in enumerate(config.sweep.n_list) for s in config.sweep.seeds]
        producers = [asyncio.create_task(produce(*trial)) for trial in trials]
        records: List[SweepRecord] = []
        for _ in trials:
            records.append(await queue.get())
        await asyncio.gather(*producers)

    records.sort(key=lambda r: (r.n, r.seed))
    clustering = context.continuum_clustering
    result = SweepResult(
        config=config, constants=context.constants, records=records,
        reference_scaled=[float(v) for v in context.reference_scaled],
        reference_groups=[list(g) for g in context.reference_groups],
        continuum_unique=clustering.result.unique if clustering else None,
        continuum_minima=len(clustering.result.minima) if clustering else 0,
        reference_ms=timer.elapsed_ms)
    failed = sum(1 for r in records if r.error)
    logger.info("📊 Sweep finished: %d trials, %d failed", len(records), failed)
    return result


def convergence_sweep(config: ExperimentConfig, threads: Optional[int] = None) -> SweepResult:
    return asyncio.run(run_sweep(config, threads))


# Connectivity

def _connectivity_trial(cloud_args: Tuple, kernel: RadialKernel, eps: float, include_diagonal: bool,
                        memory_budget: int) -> int:
    density, domain, n, seed = cloud_args
    cloud = sample(density, domain, n, seed)
    graph = build_graph(cloud, kernel, eps, include_diagonal, memory_budget)
    return connected_components(graph)[0]


def connectivity_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> List[Dict]:
    """Fraction of seeds whose graph has >= 2 components, per (n, schedule)"""
    domain = build_domain(config)
    density = build_density(config.density.name, domain, config.density.params)
    kernel = get_kernel(config.kernel.name)
    if not kernel.is_compact:
        raise InvalidArgumentError("Connectivity experiment needs a compactly supported kernel")
    schedules = config.schedule.connectivity or DEFAULT_CONNECTIVITY_SCHEDULES
    threads = threads or config.runtime.threads
    jobs = []
    for schedule in schedules:
        for n_index, n in enumerate(config.sweep.n_list):
            eps, admissible = epsilon_schedule(n, domain.dimension, schedule.prefactor, schedule.exponent)
            for seed in config.sweep.seeds:
                jobs.append((schedule, n, eps, admissible, derive_seed(seed, n_index)))

    logger.info("🚀 Connectivity experiment: %d graphs", len(jobs))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_connectivity_trial, (density, domain, n, seed), kernel, eps,
                               config.graph.include_diagonal, config.graph.memory_budget_bytes)
                   for _, n, eps, _, seed in jobs]
        components = []
        for future in futures:
            try:
                components.append(future.result())
            except ResourceError as e:
                logger.error("❌ Connectivity trial failed: %s", e)
                components.append(None)

    table: Dict[Tuple, Dict] = {}
    for (schedule, n, eps, admissible, _), count in zip(jobs, components):
        key = (schedule.prefactor, schedule.exponent, n)
        row = table.setdefault(key, {'n': n, 'prefactor': schedule.prefactor, 'exponent': schedule.exponent,
                                     'eps': eps, 'admissible': admissible, 'trials': 0,
                                     'disconnected': 0, 'failed': 0})
        if count is None:
            row['failed'] += 1
            continue
        row['trials'] += 1
        row['disconnected'] += int(count >= 2)
    rows = sorted(table.values(), key=lambda r: (r['prefactor'], r['exponent'], r['n']))
    for row in rows:
        row['frequency'] = row['disconnected'] / row['trials'] if row['trials'] else float('nan')
    return rows


# Expected-value link between graph and nonlocal energies

def energy_expectation_check(config: ExperimentConfig, n: int, eps: float, seeds: Sequence[int],
                             resolution: int = 64) -> Dict:
    """Mean of G_{n,eps}(u) over seeds against G_eps(u), u(x) = sum_i x_i^2

    E[G_{n,eps}(u)] = (n-1)/n * G_eps(u) since the i = j terms vanish.
    """
    domain = build_domain(config)
    density = build_density(config.density.name, domain, config.density.params)
    kernel = get_kernel(config.kernel.name)
    energies = []
    for seed in seeds:
        cloud = sample(density, domain, n, seed)
        graph = build_graph(cloud, kernel, eps, config.graph.include_diagonal)
        energies.append(dirichlet_energy(graph, np.sum(cloud.points ** 2, axis=1)))
    grid = grid_discretize(density, domain, resolution)
    nonlocal_value = nonlocal_energy(density, grid, np.sum(grid.centers ** 2, axis=1), eps, kernel)
    energies = np.array(energies)
    expected = nonlocal_value * (n - 1) / n
    stderr = float(energies.std(ddof=1) / np.sqrt(len(energies))) if len(energies) > 1 else float('nan')
    return {'n': n, 'eps': eps, 'seeds': len(energies), 'graph_mean': float(energies.mean()),
            'graph_stderr': stderr, 'nonlocal': nonlocal_value, 'expected': expected,
            'relative_gap': float(abs(energies.mean() - expected) / expected)}
