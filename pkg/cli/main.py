#!/usr/bin/env python3
"""
Laboratory Command Line
python -m cli <subcommand> [--config PATH] [--out DIR] [--seed N] [--threads N] [--set key=value]
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from core import exporters, pipeline
from core.config import ExperimentConfig, load_config
from core.errors import InvalidArgumentError, SpecLabError, error_payload
from core.geometry import WeightedPointSet, build_density, grid_discretize, sample
from core.kernels import get_kernel, kernel_constants
from core.report import emit_connectivity_report, emit_report
from graph.laplacian import build_graph, connected_components
from observers.metrics import metrics
from services.continuum import (ContinuumOperator, analytic_solution, continuum_reference,
                                courant_fischer_check, fd_weighted_eigs)
from services.eigensolver import rescale
from services.transport import tl2_distance

logger = logging.getLogger('cli')


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML experiment configuration')
    common.add_argument('--out', help='Output directory (report.out_dir)')
    common.add_argument('--seed', type=int, help='Cloud seed; for sweeps, the only seed')
    common.add_argument('--threads', type=int, help='Worker threads (runtime.threads)')
    common.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Dotted configuration override, repeatable')
    common.add_argument('--log-level', help='Logging level (logging.level)')

    parser = argparse.ArgumentParser(prog='python -m cli', description=__doc__.strip().splitlines()[0])
    commands = parser.add_subparsers(dest='command', required=True)

    for name, helptext in (('sample', 'Sample a point cloud and write it as CSV'),
                           ('graph', 'Build the eps-graph and write its weight triplets'),
                           ('eigen', 'First eigenpairs of the configured Laplacian'),
                           ('cluster', 'Discrete spectral clustering of one cloud')):
        sub = commands.add_parser(name, parents=[common], help=helptext)
        sub.add_argument('--n', type=int, default=1000, help='Number of samples')
        if name != 'sample':
            sub.add_argument('--eps', type=float, help='Connectivity length (default: schedule)')
        if name == 'eigen':
            sub.add_argument('--count', type=int, help='Eigenpairs to compute (sweep.eigen_count)')

    tl2 = commands.add_parser('tl2', parents=[common],
                              help='Exact TL2 distance between a discrete and the continuum eigenfunction')
    tl2.add_argument('--n', type=int, default=500)
    tl2.add_argument('--eps', type=float)
    tl2.add_argument('--index', type=int, default=2, help='1-based eigenfunction index')

    commands.add_parser('sweep', parents=[common], help='Convergence sweep over n and seeds')
    commands.add_parser('connectivity', parents=[common], help='Disconnection frequency per schedule')

    continuum = commands.add_parser('continuum', parents=[common], help='Continuum Neumann spectrum')
    continuum.add_argument('--count', type=int, help='Eigenpairs to compute (sweep.eigen_count)')
    continuum.add_argument('--method', choices=('auto', 'analytic', 'fd'), default='auto')
    continuum.add_argument('--courant-fischer', type=int, default=0, metavar='TRIALS',
                           help='Run the Courant-Fischer check with this many random subspaces')
    return parser


def configure(args: argparse.Namespace) -> ExperimentConfig:
    overrides = list(args.set or [])
    if args.out:
        overrides.append(f"report.out_dir={args.out}")
    if args.threads:
        overrides.append(f"runtime.threads={args.threads}")
    if args.log_level:
        overrides.append(f"logging.level={args.log_level}")
    if args.seed is not None and args.command in ('sweep', 'connectivity'):
        overrides.append(f"sweep.seeds=[{args.seed}]")
    config = load_config(args.config, overrides)
    logging.getLogger().setLevel(config.logging.level.upper())
    metrics.configure_budgets(config.runtime.budgets_ms)
    return config


def _setup(config: ExperimentConfig):
    domain = pipeline.build_domain(config)
    density = build_density(config.density.name, domain, config.density.params)
    return domain, density, get_kernel(config.kernel.name)


def _eps(config: ExperimentConfig, n: int, eps: Optional[float]) -> float:
    if eps is not None:
        return eps
    value, admissible = pipeline.epsilon_schedule(n, config.dimension, config.schedule.prefactor,
                                                  config.schedule.exponent)
    if not admissible:
        logger.warning("⚠️  Schedule exponent %.3g is sub-critical", config.schedule.exponent)
    return value


def _seed(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else 0


def cmd_sample(args, config) -> Dict:
    domain, density, _ = _setup(config)
    cloud = sample(density, domain, args.n, _seed(args))
    path = exporters.export_cloud(cloud, Path(config.report.out_dir) / 'cloud.csv')
    return {'n': cloud.n, 'dimension': cloud.dimension, 'seed': cloud.seed, 'cloud': str(path)}


def cmd_graph(args, config) -> Dict:
    domain, density, kernel = _setup(config)
    cloud = sample(density, domain, args.n, _seed(args))
    eps = _eps(config, args.n, args.eps)
    graph = build_graph(cloud, kernel, eps, config.graph.include_diagonal, config.graph.memory_budget_bytes)
    components, _ = connected_components(graph)
    path = exporters.export_graph(graph, Path(config.report.out_dir) / 'graph.csv')
    return {'n': graph.n, 'eps': eps, 'edges': graph.edge_count, 'components': components,
            'min_degree': float(graph.degrees.min()), 'graph': str(path)}


def cmd_eigen(args, config) -> Dict:
    domain, density, kernel = _setup(config)
    cloud = sample(density, domain, args.n, _seed(args))
    eps = _eps(config, args.n, args.eps)
    graph = build_graph(cloud, kernel, eps, config.graph.include_diagonal, config.graph.memory_budget_bytes)
    count = args.count or config.sweep.eigen_count
    kind = config.laplacian.kind
    spectrum, basis = pipeline.discrete_eigenpairs(graph, kind, count, config.solver.model_dump())
    paths = exporters.export_eigenpairs(spectrum, basis, Path(config.report.out_dir) / 'eigenpairs.csv',
                                        meta={'kind': kind, 'n': args.n, 'eps': eps})
    constants = kernel_constants(kernel, config.dimension)
    rescaled = rescale(spectrum.values, args.n, eps, kind)
    return {'kind': kind, 'eps': eps, 'eigenvalues': spectrum.values.tolist(),
            'rescaled': np.asarray(rescaled).tolist(),
            'reference_factor': pipeline.reference_factor(kind, constants),
            'groups': [list(g) for g in spectrum.groups], 'files': {k: str(v) for k, v in paths.items()}}


def cmd_cluster(args, config) -> Dict:
    domain, density, kernel = _setup(config)
    cloud = sample(density, domain, args.n, _seed(args))
    eps = _eps(config, args.n, args.eps)
    clustering = pipeline.spectral_cluster_discrete(
        cloud, kernel, eps, config.laplacian.kind, config.clustering.k, restarts=config.clustering.restarts,
        seed=_seed(args), include_diagonal=config.graph.include_diagonal, solver=config.solver.model_dump())
    out = Path(config.report.out_dir)
    labels = exporters.export_assignment(clustering.assignment.labels, out / 'assignment.csv')
    centers = exporters.export_centers(clustering.assignment.centers.centers, out / 'centers.json',
                                       clustering.result.value)
    return {'eps': eps, 'components': clustering.components,
            'masses': clustering.assignment.masses.tolist(), 'unique_minimum': clustering.result.unique,
            'excluded_mass': clustering.excluded_mass, 'files': {'labels': str(labels), 'centers': str(centers)}}


def cmd_tl2(args, config) -> Dict:
    domain, density, kernel = _setup(config)
    index = args.index - 1
    if index < 0:
        raise InvalidArgumentError("--index is 1-based")
    cloud = sample(density, domain, args.n, _seed(args))
    eps = _eps(config, args.n, args.eps)
    graph = build_graph(cloud, kernel, eps, config.graph.include_diagonal, config.graph.memory_budget_bytes)
    kind = config.laplacian.kind
    operator = ContinuumOperator.for_laplacian(kind, density, domain)
    reference = continuum_reference(operator, index + 1, config.continuum.fd_resolution(domain.dimension))
    nodes = reference.evaluate(cloud.points, range(index + 1))
    _, basis = pipeline.discrete_eigenpairs(graph, kind, index + 1, config.solver.model_dump(), reference=nodes)

    per_axis = int(np.floor(config.transport.exact_budget ** (1.0 / domain.dimension)))
    grid = grid_discretize(density, domain, max(per_axis, 2))
    continuum_values = reference.evaluate(grid.centers, [index])[:, 0]
    weights = np.full(cloud.n, 1.0 / cloud.n)
    distance, plan = tl2_distance(grid.as_point_set(), continuum_values, WeightedPointSet(cloud.points, weights),
                                  basis.vectors[:, index], config.transport.exact_budget)
    path = exporters.export_plan(plan, Path(config.report.out_dir) / 'plan.csv')
    return {'n': cloud.n, 'eps': eps, 'index': args.index, 'tl2': distance, 'plan': str(path)}


def cmd_sweep(args, config) -> Dict:
    result = pipeline.convergence_sweep(config, config.runtime.threads)
    paths = emit_report(result)
    failures = [r for r in result.records if r.error]
    return {'trials': len(result.records), 'failures': len(failures), 'files': paths}


def cmd_connectivity(args, config) -> Dict:
    rows = pipeline.connectivity_experiment(config, config.runtime.threads)
    paths = emit_connectivity_report(rows, config.report.out_dir, f"{config.report.name}_connectivity")
    return {'rows': rows, 'files': paths}


def cmd_continuum(args, config) -> Dict:
    domain, density, _ = _setup(config)
    operator = ContinuumOperator.for_laplacian(config.laplacian.kind, density, domain)
    count = args.count or config.sweep.eigen_count
    resolution = config.continuum.fd_resolution(domain.dimension)
    method = args.method
    if method == 'auto':
        method = 'analytic' if density.is_constant else 'fd'
    if method == 'analytic':
        solution = analytic_solution(operator, count, resolution)
    else:
        solution = fd_weighted_eigs(operator, resolution, count, seed=_seed(args))
    columns = {f"u{j + 1}": solution.basis.vectors[:, j] for j in range(count)}
    path = exporters.export_grid(solution.grid, Path(config.report.out_dir) / 'continuum.csv', columns)
    summary = {'operator': operator.kind, 'method': solution.method, 'resolution': list(solution.grid.resolution),
               'eigenvalues': solution.spectrum.values.tolist(),
               'groups': [list(g) for g in solution.spectrum.groups], 'grid': str(path)}
    if args.courant_fischer:
        if solution.stiffness is None:
            solution = fd_weighted_eigs(operator, resolution, count, seed=_seed(args))
        checks = [courant_fischer_check(solution, j, trials=args.courant_fischer, seed=_seed(args))
                  for j in range(1, count + 1)]
        summary['courant_fischer'] = checks
        summary['courant_fischer_passed'] = all(c['passed'] for c in checks)
    return summary


COMMANDS = {
    'sample': cmd_sample,
    'graph': cmd_graph,
    'eigen': cmd_eigen,
    'cluster': cmd_cluster,
    'tl2': cmd_tl2,
    'sweep': cmd_sweep,
    'connectivity': cmd_connectivity,
    'continuum': cmd_continuum,
}


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = configure(args)
        logger.info("🚀 %s", args.command)
        summary = COMMANDS[args.command](args, config)
    except SpecLabError as e:
        logger.error("❌ %s failed: %s", args.command, e)
        print(json.dumps(error_payload(e), indent=2))
        return e.exit_code
    print(json.dumps(summary, indent=2, default=float))
    logger.info("✅ %s finished", args.command)
    return 0


if __name__ == '__main__':
    sys.exit(main())
