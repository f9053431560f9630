#!/usr/bin/env python3
"""
Weighted Graphs and Laplacians
Similarity matrix W^eps, degrees, L / N^sym / N^rw and the discrete Dirichlet energies
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _csgraph_components

from core.errors import InternalInvariantError, InvalidArgumentError, ResourceError
from core.geometry import PointCloud
from core.kernels import KernelConstants, RadialKernel, eval_scaled_distance, kernel_constants
from graph.neighbors import radius_pairs

logger = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 2 * 1024 ** 3
# row, col and value arrays during COO assembly
BYTES_PER_ENTRY = 24

LAPLACIAN_KINDS = ('unnormalized', 'sym', 'rw')


@dataclass(frozen=True)
class WeightedGraph:
    """Point cloud + eps + symmetric W (CSR) + degrees D_ii = sum_j W_ij"""
    weights: sp.csr_matrix
    degrees: np.ndarray
    eps: float
    dimension: int
    cloud: Optional[PointCloud] = None
    constants: Optional[KernelConstants] = None
    include_diagonal: bool = True

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def edge_count(self) -> int:
        """Undirected off-diagonal edges"""
        off = self.weights.nnz - (self.n if self.include_diagonal else 0)
        return off // 2

    @classmethod
    def from_weights(cls, weights, eps: float = 1.0, dimension: int = 1,
                     cloud: Optional[PointCloud] = None) -> 'WeightedGraph':
        """Graph from an explicit symmetric weight matrix, diagonal as given"""
        matrix = sp.csr_matrix(weights, dtype=float)
        if matrix.shape[0] != matrix.shape[1]:
            raise InvalidArgumentError("Weight matrix must be square")
        asymmetry = abs(matrix - matrix.T).max() if matrix.nnz else 0.0
        if asymmetry > 0:
            raise InvalidArgumentError("Weight matrix must be symmetric")
        if matrix.nnz and matrix.data.min() < 0:
            raise InvalidArgumentError("Weights must be nonnegative")
        matrix.eliminate_zeros()
        degrees = np.asarray(matrix.sum(axis=1)).ravel()
        has_diagonal = bool(np.all(matrix.diagonal() > 0))
        return cls(matrix, degrees, float(eps), dimension, cloud, None, has_diagonal)

    def triplets(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, w) with i <= j, sorted, 0-based"""
        upper = sp.triu(self.weights, k=0, format='coo')
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order], upper.col[order], upper.data[order]


@dataclass(frozen=True)
class Laplacian:
    """Symmetric matrix for a Laplacian kind; rw is carried as (N^sym, degrees)"""
    kind: str
    matrix: sp.csr_matrix
    degrees: np.ndarray

    def matvec(self, u: np.ndarray) -> np.ndarray:
        """Action of L, N^sym or N^rw = D^-1/2 N^sym D^1/2 on u"""
        if self.kind == 'rw':
            root = np.sqrt(self.degrees)
            return (self.matrix @ (root * u)) / root
        return self.matrix @ u


def build_graph(cloud: PointCloud, kernel: RadialKernel, eps: float,
                include_diagonal: bool = True,
                memory_budget: int = DEFAULT_MEMORY_BUDGET) -> WeightedGraph:
    """W_ij = eta_eps(x_i - x_j) on all pairs within eps * R, assembled by cell list"""
    if eps is None or eps <= 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    if not kernel.is_compact:
        raise InvalidArgumentError(f"Kernel '{kernel.name}' has no compact support radius")
    n, d = cloud.n, cloud.dimension
    max_pairs = max(0, (memory_budget // BYTES_PER_ENTRY - n) // 2)

    rows, cols, dist = radius_pairs(cloud.points, eps * kernel.support_radius, max_pairs=max_pairs)
    if rows.shape[0] > max_pairs:
        raise ResourceError(
            f"Graph with {rows.shape[0]} edges exceeds the memory budget of {memory_budget} bytes")
    values = eval_scaled_distance(kernel, d, eps, dist)
    keep = values > 0
    rows, cols, values = rows[keep], cols[keep], values[keep]

    if include_diagonal:
        diagonal = np.arange(n)
        self_weight = float(eval_scaled_distance(kernel, d, eps, 0.0))
        all_rows = np.concatenate([rows, cols, diagonal])
        all_cols = np.concatenate([cols, rows, diagonal])
        all_values = np.concatenate([values, values, np.full(n, self_weight)])
    else:
        all_rows = np.concatenate([rows, cols])
        all_cols = np.concatenate([cols, rows])
        all_values = np.concatenate([values, values])

    weights = sp.csr_matrix((all_values, (all_rows, all_cols)), shape=(n, n))
    weights.sort_indices()
    degrees = np.asarray(weights.sum(axis=1)).ravel()
    constants = kernel_constants(kernel, d)
    logger.debug("Built graph n=%d eps=%.4g edges=%d mean degree entries=%.1f",
                 n, eps, rows.shape[0], weights.nnz / n)
    return WeightedGraph(weights, degrees, float(eps), d, cloud, constants, include_diagonal)


def laplacian(graph: WeightedGraph, kind: str = 'unnormalized') -> Laplacian:
    """L = D - W, N^sym = D^-1/2 L D^-1/2; rw returns N^sym with the degrees"""
    if kind not in LAPLACIAN_KINDS:
        raise InvalidArgumentError(f"Unknown Laplacian kind '{kind}', expected one of {LAPLACIAN_KINDS}")
    unnormalized = (sp.diags(graph.degrees) - graph.weights).tocsr()
    if kind == 'unnormalized':
        return Laplacian(kind, unnormalized, graph.degrees)

    if np.any(graph.degrees <= 0):
        raise InternalInvariantError(
            f"{int(np.sum(graph.degrees <= 0))} nodes have zero degree; normalized Laplacian undefined")
    scale = sp.diags(1.0 / np.sqrt(graph.degrees))
    sym = (scale @ unnormalized @ scale).tocsr()
    # exact symmetry after the two-sided scaling
    sym = ((sym + sym.T) * 0.5).tocsr()
    return Laplacian(kind, sym, graph.degrees)


def _check_length(graph: WeightedGraph, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (graph.n,):
        raise InvalidArgumentError(f"Vector of shape {u.shape} does not match graph with {graph.n} nodes")
    return u


def dirichlet_energy(graph: WeightedGraph, u) -> float:
    """G_{n,eps}(u) = (1/(eps^2 n^2)) sum_{i,j} W_ij (u_i - u_j)^2"""
    u = _check_length(graph, u)
    coo = graph.weights.tocoo()
    total = float(np.sum(coo.data * (u[coo.row] - u[coo.col]) ** 2))
    return total / (graph.eps ** 2 * graph.n ** 2)


def normalized_dirichlet_energy(graph: WeightedGraph, u) -> float:
    """G-bar_{n,eps}(u) = (1/(n eps^2)) sum_{i,j} W_ij (u_i/sqrt(D_ii) - u_j/sqrt(D_jj))^2"""
    u = _check_length(graph, u)
    if np.any(graph.degrees <= 0):
        raise InternalInvariantError("Normalized energy needs strictly positive degrees")
    scaled = u / np.sqrt(graph.degrees)
    coo = graph.weights.tocoo()
    total = float(np.sum(coo.data * (scaled[coo.row] - scaled[coo.col]) ** 2))
    return total / (graph.n * graph.eps ** 2)


def quadratic_form(matrix: sp.spmatrix, u: np.ndarray) -> float:
    """<A u, u> in the plain Euclidean pairing"""
    return float(u @ (matrix @ u))


def connected_components(graph: WeightedGraph) -> Tuple[int, np.ndarray]:
    """Component count and labels over the nonzero pattern of W"""
    count, labels = _csgraph_components(graph.weights, directed=False)
    return int(count), labels
