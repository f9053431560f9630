#!/usr/bin/env python3
"""
Sweep Reports
CSV records, JSON summaries with medians and budgets, log-log SVG plots
"""

import csv
import hashlib
import io
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from core.errors import InvalidArgumentError
from observers.metrics import metrics

logger = logging.getLogger(__name__)

CSV_COLUMNS = ('n', 'seed', 'eps', 'kind', 'k_index', 'eigenvalue', 'rescaled', 'reference', 'rel_error',
               'subspace_tl2', 'cluster_w2_total', 'components', 'wall_ms')
INTEGER_COLUMNS = ('n', 'seed', 'k_index', 'components')
TEXT_COLUMNS = ('kind',)
CONNECTIVITY_COLUMNS = ('prefactor', 'exponent', 'n', 'eps', 'admissible', 'trials', 'disconnected',
                        'failed', 'frequency')
SUMMARY_SCHEMA_VERSION = 1


def _format(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g') if math.isfinite(value) else ''
    return str(value)


def _parse(column: str, raw: str):
    if raw == '':
        return None
    if column in TEXT_COLUMNS:
        return raw
    if column in INTEGER_COLUMNS:
        return int(raw)
    return float(raw)


def jsonable(value):
    """NaN/inf become null; numpy scalars and arrays become plain Python"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def record_rows(records: Sequence, timing_in_csv: bool = False) -> List[Dict]:
    """One row per (trial, eigenvalue index); k_index is 1-based"""
    rows = []
    for record in records:
        for j, eigenvalue in enumerate(record.eigenvalues):
            subspace = record.subspace_tl2[j] if j < len(record.subspace_tl2) else None
            if subspace is not None and not math.isfinite(subspace):
                subspace = None
            rows.append({
                'n': record.n,
                'seed': record.seed,
                'eps': record.eps,
                'kind': record.kind,
                'k_index': j + 1,
                'eigenvalue': eigenvalue,
                'rescaled': record.rescaled[j],
                'reference': record.references[j],
                'rel_error': record.rel_errors[j],
                'subspace_tl2': subspace,
                'cluster_w2_total': record.cluster_w2_total,
                'components': record.components,
                'wall_ms': record.wall_ms if timing_in_csv else 0.0,
            })
    return rows


def render_csv(rows: Iterable[Dict], columns: Sequence[str] = CSV_COLUMNS) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format(row.get(column)) for column in columns])
    return buffer.getvalue()


def parse_csv(text: str) -> List[Dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise InvalidArgumentError(f"Unexpected CSV header {reader.fieldnames}")
    return [{column: _parse(column, row[column]) for column in CSV_COLUMNS} for row in reader]


def _median(values: Iterable) -> Optional[float]:
    finite = [float(v) for v in values if v is not None and math.isfinite(float(v))]
    return float(np.median(finite)) if finite else None


def compute_medians(rows: Sequence[Dict]) -> Dict[int, Dict]:
    """Median rescaled eigenvalue, relative error and subspace TL2 per n and k_index"""
    medians: Dict[int, Dict] = {}
    for n in sorted({row['n'] for row in rows}):
        at_n = [row for row in rows if row['n'] == n]
        per_index = {}
        for k_index in sorted({row['k_index'] for row in at_n}):
            subset = [row for row in at_n if row['k_index'] == k_index]
            per_index[k_index] = {
                'rescaled': _median(row['rescaled'] for row in subset),
                'rel_error': _median(row['rel_error'] for row in subset),
                'subspace_tl2': _median(row['subspace_tl2'] for row in subset),
            }
        cluster = {row['seed']: row['cluster_w2_total'] for row in at_n}
        medians[n] = {
            'trials': len(cluster),
            'cluster_w2_total': _median(cluster.values()),
            'by_index': per_index,
        }
    return medians


def _trial_medians(records: Sequence, n: int) -> Dict:
    at_n = [r for r in records if r.n == n and r.error is None]
    return {
        'projection_tl2': _median(r.projection_tl2 for r in at_n),
        'inner_product_gap': _median(r.inner_product_gap for r in at_n),
        'sup_displacement': _median(r.sup_displacement for r in at_n),
        'cluster_mass_gap': _median(r.cluster_mass_gap for r in at_n),
        'disconnected_fraction': (sum(1 for r in at_n if r.components >= 2) / len(at_n)) if at_n else None,
    }


def build_summary(result, rows: Sequence[Dict], csv_digest: str) -> Dict:
    medians = compute_medians(rows)
    for n, entry in medians.items():
        entry.update(_trial_medians(result.records, n))
    return jsonable({
        'schema_version': SUMMARY_SCHEMA_VERSION,
        'config': result.config.echo(),
        'kernel_constants': result.constants.as_dict(),
        'reference': {'scaled_eigenvalues': result.reference_scaled, 'groups': result.reference_groups},
        'continuum_clustering': {'unique': result.continuum_unique, 'minima': result.continuum_minima},
        'medians': medians,
        'trials': [{
            'n': r.n, 'seed': r.seed, 'sample_seed': r.sample_seed, 'eps': r.eps, 'admissible': r.admissible,
            'components': r.components, 'tl2_method': r.tl2_method, 'subspace_distance': r.subspace_distance,
            'projection_tl2': r.projection_tl2, 'inner_product_gap': r.inner_product_gap,
            'sup_displacement': r.sup_displacement, 'cluster_w2_total': r.cluster_w2_total,
            'cluster_mass_gap': r.cluster_mass_gap, 'cluster_permutation': r.cluster_permutation,
            'wall_ms': r.wall_ms, 'stage_ms': r.stage_ms, 'error': r.error,
        } for r in result.records],
        'failures': sum(1 for r in result.records if r.error),
        'reference_ms': result.reference_ms,
        'timings': metrics.stage_summary(),
        'budgets': metrics.get_budget_dashboard(),
        'csv_sha256': csv_digest,
    })


def plot_convergence(medians: Dict, path: Path, title: str) -> Optional[Path]:
    """Log-log median rel_error and subspace_tl2 against n, one line per k_index"""
    ns = sorted(medians)
    if len(ns) < 1:
        return None
    indices = sorted({k for entry in medians.values() for k in entry['by_index']})
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for panel, key in zip(axes, ('rel_error', 'subspace_tl2')):
        for k_index in indices:
            points = [(n, medians[n]['by_index'].get(k_index, {}).get(key)) for n in ns]
            points = [(n, v) for n, v in points if v is not None and v > 0]
            if points:
                panel.loglog(*zip(*points), marker='o', label=f"k={k_index}")
        panel.set_xlabel('n')
        panel.set_ylabel(f"median {key}")
        panel.grid(True, which='both', alpha=0.3)
        if panel.get_legend_handles_labels()[0]:
            panel.legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    # fixed hash salt and no date keep the SVG byte-stable across runs
    with matplotlib.rc_context({'svg.hashsalt': 'speclab'}):
        fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return path


def emit_report(result, out_dir: Optional[str] = None, name: Optional[str] = None,
                plots: Optional[bool] = None) -> Dict[str, str]:
    """Write <name>.csv, <name>.json and (optionally) <name>.svg; returns their paths"""
    if result is None or not result.records:
        raise InvalidArgumentError("emit_report needs at least one record")
    report = result.config.report
    out = Path(out_dir or report.out_dir)
    name = name or report.name
    plots = report.plots if plots is None else plots
    out.mkdir(parents=True, exist_ok=True)

    rows = record_rows(result.records, report.timing_in_csv)
    text = render_csv(rows)
    data = text.encode('utf-8')
    digest = hashlib.sha256(data).hexdigest()
    paths = {'csv': out / f"{name}.csv", 'json': out / f"{name}.json"}
    paths['csv'].write_bytes(data)

    summary = build_summary(result, rows, digest)
    paths['json'].write_text(json.dumps(summary, indent=2, sort_keys=True))

    if plots and rows:
        svg = plot_convergence(compute_medians(rows), out / f"{name}.svg",
                               f"{result.config.laplacian.kind} Laplacian, d={result.config.dimension}")
        if svg is not None:
            paths['svg'] = svg
    logger.info("📊 Report written to %s (csv sha256 %s)", out, digest[:12])
    return {key: str(path) for key, path in paths.items()}


def emit_connectivity_report(rows: Sequence[Dict], out_dir: str, name: str = 'connectivity') -> Dict[str, str]:
    if not rows:
        raise InvalidArgumentError("emit_connectivity_report needs at least one row")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    json_path = out / f"{name}.json"
    text = render_csv(rows, CONNECTIVITY_COLUMNS)
    csv_path.write_text(text)
    json_path.write_text(json.dumps(jsonable({
        'rows': list(rows),
        'csv_sha256': hashlib.sha256(text.encode('utf-8')).hexdigest(),
        'budgets': metrics.get_budget_dashboard(),
    }), indent=2, sort_keys=True))
    logger.info("📊 Connectivity table written to %s", out)
    return {'csv': str(csv_path), 'json': str(json_path)}
