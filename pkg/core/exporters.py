#!/usr/bin/env python3
"""
Artifact Exporters
Plain-text dumps of clouds, graphs, eigenpairs, transport plans, clusters and grid functions
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np

from core.geometry import GridMeasure, PointCloud
from services.eigensolver import EigenBasis, Spectrum

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _fmt(value: float) -> str:
    return format(float(value), '.17g')


def _coordinate_names(d: int) -> list:
    return [f"x{i + 1}" for i in range(d)]


def _write_rows(path: PathLike, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
    logger.debug("Wrote %s", path)
    return path


def export_cloud(cloud: PointCloud, path: PathLike) -> Path:
    """One row per point, columns x1..xd"""
    rows = ([_fmt(v) for v in point] for point in cloud.points)
    return _write_rows(path, _coordinate_names(cloud.dimension), rows)


def export_graph(graph, path: PathLike) -> Path:
    """Upper-triangle (i, j, w_ij) triplets, diagonal included when present"""
    rows_i, cols_j, values = graph.triplets()
    return _write_rows(path, ['i', 'j', 'w'],
                       ([int(i), int(j), _fmt(w)] for i, j, w in zip(rows_i, cols_j, values)))


def export_eigenpairs(spectrum: Spectrum, basis: EigenBasis, path: PathLike,
                      meta: Optional[Dict] = None) -> Dict[str, Path]:
    """One row per eigenpair (eigenvalue, u(x_1)..u(x_n)), groups and residuals in a JSON header file"""
    path = Path(path)
    header = ['eigenvalue'] + [f"v{i + 1}" for i in range(basis.vectors.shape[0])]
    rows = ([_fmt(value)] + [_fmt(v) for v in basis.vectors[:, j]]
            for j, value in enumerate(spectrum.values[:basis.k]))
    csv_path = _write_rows(path, header, rows)
    json_path = path.with_suffix('.json')
    document = {
        'eigenvalues': [float(v) for v in spectrum.values],
        'groups': [list(g) for g in spectrum.groups],
        'multiplicities': spectrum.multiplicities,
        'residuals': [float(r) for r in basis.residuals],
        'orthonormal': basis.orthonormal,
        'normalization': 'unit norm under the node weights',
    }
    document.update(meta or {})
    json_path.write_text(json.dumps(document, indent=2, sort_keys=True))
    return {'csv': csv_path, 'json': json_path}


def export_plan(plan, path: PathLike) -> Path:
    """Nonzero coupling entries (i, j, pi_ij) in row-major order"""
    rows_i, cols_j, values = plan.triplets()
    return _write_rows(path, ['i', 'j', 'mass'],
                       ([int(i), int(j), _fmt(m)] for i, j, m in zip(rows_i, cols_j, values)))


def export_assignment(labels: np.ndarray, path: PathLike) -> Path:
    """index, label (-1 for points excluded from the embedding)"""
    return _write_rows(path, ['index', 'label'], ([i, int(label)] for i, label in enumerate(labels)))


def export_centers(centers: np.ndarray, path: PathLike, value: Optional[float] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {'centers': np.asarray(centers, dtype=float).tolist()}
    if value is not None:
        document['objective'] = float(value)
    path.write_text(json.dumps(document, indent=2))
    return path


def export_grid(grid: GridMeasure, path: PathLike, columns: Optional[Dict[str, np.ndarray]] = None) -> Path:
    """Cell centers, cell masses and any number of per-cell value columns"""
    columns = columns or {}
    names = list(columns)
    header = ['cell'] + _coordinate_names(grid.domain.dimension) + ['weight'] + names
    stacked = [np.asarray(columns[name]) for name in names]
    rows = (
        [c] + [_fmt(v) for v in grid.centers[c]] + [_fmt(grid.weights[c])]
        + [_fmt(values[c]) if np.issubdtype(values.dtype, np.floating) else int(values[c]) for values in stacked]
        for c in range(grid.size))
    return _write_rows(path, header, rows)
