#!/usr/bin/env python3
"""
Experiment Configuration Validator
Loads a YAML experiment, reports schedule admissibility, graph sizes and solver budgets
"""

import argparse
import math
import sys
from datetime import datetime
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from core.config import ExperimentConfig, load_config  # noqa: E402
from core.errors import SpecLabError  # noqa: E402
from core.kernels import get_kernel, validate_conditions  # noqa: E402
from core.pipeline import critical_rate, epsilon_schedule  # noqa: E402
from graph.laplacian import BYTES_PER_ENTRY  # noqa: E402


def expected_neighbors(config: ExperimentConfig, n: int, eps: float) -> float:
    """n * vol(B(0, R eps)) / vol(domain), the mean neighbor count for a uniform cloud"""
    kernel = get_kernel(config.kernel.name)
    d = config.dimension
    radius = (kernel.support_radius or 1.0) * eps
    ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius ** d
    volume = math.prod(b - a for a, b in zip(config.domain.lower, config.domain.upper))
    return n * min(ball / volume, 1.0)


def validate_config(config: ExperimentConfig) -> bool:
    d = config.dimension
    ok = True
    print(f"📝 Domain: {config.domain.lower} .. {config.domain.upper} (d={d})")
    print(f"📝 Density: {config.density.name} {config.density.params or ''}")
    print(f"📝 Laplacian: {config.laplacian.kind}, kernel: {config.kernel.name}, k = {config.clustering.k}")

    report = validate_conditions(get_kernel(config.kernel.name), d)
    if report['passed']:
        print("✅ Kernel is admissible (positive at zero, non-increasing, finite moment)")
    else:
        ok = False
        for failure in report['failures']:
            print(f"❌ {failure}")

    exponent = config.schedule.exponent
    if exponent < 1.0:
        print(f"✅ Schedule eps_n = {config.schedule.prefactor} * r(n)^{exponent} is admissible")
    else:
        print(f"⚠️  Schedule exponent {exponent} >= 1 is sub-critical (connectivity experiment only)")

    print("\n📊 Graph sizes per n:")
    budget = config.graph.memory_budget_bytes
    for n in config.sweep.n_list:
        if n < 2:
            print(f"   ❌ n = {n}: schedules need n >= 2")
            ok = False
            continue
        eps, _ = epsilon_schedule(n, d, config.schedule.prefactor, exponent)
        neighbors = expected_neighbors(config, n, eps)
        memory = n * neighbors * BYTES_PER_ENTRY
        marker = '✅' if memory <= budget else '❌'
        ok = ok and memory <= budget
        print(f"   {marker} n = {n}: eps = {eps:.4g}, eps / r(n) = {eps / critical_rate(n, d):.3g}, "
              f"~{neighbors:.0f} neighbors, ~{memory / 1024 ** 2:.1f} MiB")

    print("\n📊 Solver budgets:")
    print(f"   dense eigensolver up to n = {config.solver.dense_threshold}, rtol = {config.solver.rtol:g}")
    exact = [n for n in config.sweep.n_list if n <= config.transport.tl2_exact_max_n]
    print(f"   exact TL2 for n in {exact or 'none'} (support budget {config.transport.exact_budget})")
    print(f"   continuum grid {config.continuum.fd_resolution(d)} per axis, clusters on "
          f"{config.continuum.cluster_resolution} per axis")
    if config.sweep.compare_clusters and config.continuum.cluster_resolution ** d > config.transport.exact_budget:
        print("   ⚠️  Cluster grid exceeds the exact transport budget; cluster distances will fail")
        ok = False
    return ok


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument('config', help='YAML experiment configuration')
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE')
    args = parser.parse_args()

    print("🧪 EXPERIMENT CONFIGURATION - Validator")
    print("=" * 40)
    print(f"Validation Time: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
    try:
        config = load_config(args.config, args.set)
    except SpecLabError as e:
        print(f"❌ {e}")
        return e.exit_code

    if validate_config(config):
        print("\n🎯 CONFIGURATION READY")
        return 0
    print("\n⚠️  Configuration issues detected")
    return 2


if __name__ == '__main__':
    sys.exit(main())
