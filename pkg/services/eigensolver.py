#!/usr/bin/env python3
"""
Eigensolver Service
Smallest eigenpairs of weighted symmetric problems, multiplicity grouping and projections
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, lobpcg, splu

from core.errors import InvalidArgumentError, SolverError

logger = logging.getLogger(__name__)

DENSE_THRESHOLD = 512
RESIDUAL_RTOL = 1e-8
GROUP_RTOL = 1e-6
GROUP_FLOOR = 1e-12
# eigenvalues closer than this fraction of ||C|| are indistinguishable from solver noise
NOISE_FLOOR = 1e-10
ADAPTIVE_GAP_RATIO = 10.0
MAX_LOCKING_ROUNDS = 8


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with their multiplicity groups (index lists)"""
    values: np.ndarray
    groups: Tuple[Tuple[int, ...], ...]
    rtol: float = GROUP_RTOL

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def distinct(self) -> np.ndarray:
        return np.array([self.values[list(g)].mean() for g in self.groups])

    @property
    def multiplicities(self) -> List[int]:
        return [len(g) for g in self.groups]

    @property
    def offsets(self) -> List[int]:
        """k-hat: index of the first eigenvalue of each group"""
        return [g[0] for g in self.groups]

    def group_of(self, index: int) -> Tuple[int, ...]:
        for group in self.groups:
            if index in group:
                return group
        raise InvalidArgumentError(f"Eigenvalue index {index} is outside the spectrum")

    def regroup(self, groups: Sequence[Sequence[int]]) -> 'Spectrum':
        return Spectrum(self.values, tuple(tuple(g) for g in groups), self.rtol)


@dataclass(frozen=True)
class EigenBasis:
    """Eigenvectors as columns, unit norm under <u,v>_w = sum_i w_i u_i v_i"""
    vectors: np.ndarray
    weights: np.ndarray
    spectrum: Spectrum
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # False when the vectors are only orthogonal in another inner product (rw bases)
    orthonormal: bool = True

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return self.vectors.T @ (self.weights[:, None] * self.vectors)

    def group_vectors(self, group: Sequence[int]) -> np.ndarray:
        return self.vectors[:, list(group)]


def _as_positive(vector: Optional[np.ndarray], n: int, name: str) -> Optional[np.ndarray]:
    if vector is None:
        return None
    vector = np.asarray(vector, dtype=float).reshape(-1)
    if vector.shape[0] != n:
        raise InvalidArgumentError(f"{name} has length {vector.shape[0]}, expected {n}")
    if np.any(vector <= 0):
        raise InvalidArgumentError(f"{name} must be strictly positive")
    return vector


def _residuals(matrix, values: np.ndarray, vectors: np.ndarray, norm: float) -> np.ndarray:
    """||C y - lambda y|| / (||C|| ||y||) for the congruent problem"""
    applied = matrix @ vectors
    diff = applied - vectors * values[None, :]
    return np.linalg.norm(diff, axis=0) / (max(norm, 1e-300) * np.linalg.norm(vectors, axis=0))


def _matrix_norm(matrix) -> float:
    if sp.issparse(matrix):
        return float(abs(matrix).sum(axis=1).max())
    return float(np.abs(matrix).sum(axis=1).max())


def _dense_smallest(matrix, k: int) -> Tuple[np.ndarray, np.ndarray]:
    dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    values, vectors = sla.eigh(dense, subset_by_index=[0, k - 1])
    return values, vectors


def _preconditioner(matrix: sp.csc_matrix, norm: float) -> LinearOperator:
    """Shifted sparse LU as an approximate inverse"""
    n = matrix.shape[0]
    shift = 1e-6 * norm
    lu = splu((matrix + shift * sp.identity(n, format='csc')).tocsc())
    return LinearOperator((n, n), matvec=lu.solve, matmat=lu.solve, dtype=float)


def _iterative_smallest(matrix, k: int, rtol: float, max_iter: int, seed: int,
                        norm: float) -> Tuple[np.ndarray, np.ndarray]:
    """LOBPCG with locking: converged leading pairs become constraints of the next round"""
    n = matrix.shape[0]
    matrix = sp.csr_matrix(matrix)
    rng = np.random.default_rng(seed)
    preconditioner = _preconditioner(matrix.tocsc(), norm)
    locked_values: List[float] = []
    locked_vectors: List[np.ndarray] = []
    best_residuals = np.full(k, np.inf)

    for round_index in range(MAX_LOCKING_ROUNDS):
        remaining = k - len(locked_values)
        if remaining == 0:
            break
        block = min(n - len(locked_values), max(remaining + 2, 2 * remaining))
        start = rng.standard_normal((n, block))
        constraints = np.column_stack(locked_vectors) if locked_vectors else None
        values, vectors = lobpcg(matrix, start, M=preconditioner, Y=constraints,
                                 tol=rtol * norm * 0.1, maxiter=max_iter, largest=False)
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
        vectors = vectors / np.linalg.norm(vectors, axis=0)
        residuals = _residuals(matrix, values, vectors, norm)

        accepted = 0
        for value, vector, residual in zip(values, vectors.T, residuals):
            if residual >= rtol or len(locked_values) == k:
                break
            locked_values.append(float(value))
            locked_vectors.append(vector)
            accepted += 1
        pending = residuals[accepted:remaining]
        best_residuals[len(locked_values):len(locked_values) + pending.shape[0]] = pending
        logger.debug("LOBPCG round %d locked %d/%d pairs", round_index, len(locked_values), k)

    if len(locked_values) < k:
        best = [0.0] * len(locked_values) + [float(r) for r in best_residuals[len(locked_values):]]
        raise SolverError(
            f"Iterative eigensolver converged {len(locked_values)} of {k} pairs", residuals=best)

    values = np.array(locked_values)
    vectors = np.column_stack(locked_vectors)
    order = np.argsort(values, kind='stable')
    return values[order], vectors[:, order]


def fix_signs(vectors: np.ndarray, weights: np.ndarray,
              reference: Optional[np.ndarray] = None) -> np.ndarray:
    """First vector with weighted mean >= 0, others first nonzero entry positive;
    a reference (columns) overrides both by maximizing <u, ref>_w"""
    vectors = np.array(vectors, dtype=float, copy=True)
    for j in range(vectors.shape[1]):
        column = vectors[:, j]
        if reference is not None and j < reference.shape[1]:
            score = float(np.sum(weights * column * reference[:, j]))
            if score < 0:
                vectors[:, j] = -column
            continue
        scale = np.max(np.abs(column)) if column.size else 0.0
        if j == 0:
            mean = float(np.sum(weights * column))
            if abs(mean) > 1e-12 * max(scale, 1e-300):
                if mean < 0:
                    vectors[:, j] = -column
                continue
        nonzero = np.nonzero(np.abs(column) > 1e-12 * scale)[0]
        if nonzero.size and column[nonzero[0]] < 0:
            vectors[:, j] = -column
    return vectors


def smallest_k(matrix, k: int, weights: Optional[np.ndarray] = None,
               mass: Optional[np.ndarray] = None, dense_threshold: int = DENSE_THRESHOLD,
               rtol: float = RESIDUAL_RTOL, max_iter: int = 2000, seed: int = 0,
               group_rtol: float = GROUP_RTOL, adaptive: bool = False,
               reference: Optional[np.ndarray] = None,
               force_iterative: bool = False) -> Tuple[Spectrum, EigenBasis]:
    """Smallest k eigenpairs of A x = lambda M x, M = diag(mass) (identity by default)

    The problem is reduced to the symmetric C = M^-1/2 A M^-1/2. Eigenvectors are
    then normalized to unit norm under `weights` (uniform 1/n by default).
    """
    n = matrix.shape[0]
    if matrix.shape[0] != matrix.shape[1]:
        raise InvalidArgumentError("Eigenproblem matrix must be square")
    if k is None or k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if k > n:
        raise InvalidArgumentError(f"k = {k} exceeds the problem size n = {n}")
    weights = _as_positive(weights, n, 'weights')
    if weights is None:
        weights = np.full(n, 1.0 / n)
    mass = _as_positive(mass, n, 'mass')

    if mass is not None:
        scale = sp.diags(1.0 / np.sqrt(mass))
        congruent = scale @ sp.csr_matrix(matrix) @ scale
        congruent = ((congruent + congruent.T) * 0.5).tocsr()
    else:
        congruent = sp.csr_matrix(matrix) if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    norm = _matrix_norm(congruent)

    if n <= dense_threshold and not force_iterative:
        values, vectors = _dense_smallest(congruent, k)
    elif n <= 3 * k + 4:
        values, vectors = _dense_smallest(congruent, k)
    else:
        values, vectors = _iterative_smallest(congruent, k, rtol, max_iter, seed, norm)

    residuals = _residuals(congruent, values, vectors, norm)
    if mass is not None:
        vectors = vectors / np.sqrt(mass)[:, None]
    vectors = vectors / np.sqrt(np.sum(weights[:, None] * vectors ** 2, axis=0))
    vectors = fix_signs(vectors, weights, reference)

    groups = group_eigenvalues(values, group_rtol, adaptive=adaptive, atol=NOISE_FLOOR * norm)
    spectrum = Spectrum(values, groups, group_rtol)
    logger.debug("smallest_k n=%d k=%d path=%s max residual=%.2e", n, k,
                 'dense' if n <= dense_threshold and not force_iterative else 'lobpcg',
                 float(residuals.max()))
    return spectrum, EigenBasis(vectors, weights, spectrum, residuals)


def group_eigenvalues(values: Sequence[float], rtol: float = GROUP_RTOL, floor: float = GROUP_FLOOR,
                      adaptive: bool = False, atol: float = 0.0,
                      gap_ratio: float = ADAPTIVE_GAP_RATIO) -> Tuple[Tuple[int, ...], ...]:
    """Index groups of an ascending spectrum

    Tolerance mode merges neighbours whose gap <= max(rtol * max(|lambda|, floor), atol).
    Adaptive mode additionally merges a gap when every adjacent gap is at least
    gap_ratio times larger, then drops boundaries smaller than gap_ratio times the
    spread of the groups they separate.
    """
    if rtol <= 0:
        raise InvalidArgumentError(f"Grouping rtol must be positive, got {rtol}")
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return ()
    gaps = np.diff(values)
    scale = np.maximum(np.maximum(np.abs(values[:-1]), np.abs(values[1:])), floor)
    cuttable = gaps > np.maximum(rtol * scale, atol)

    if not adaptive:
        return _partition(values.size, np.nonzero(cuttable)[0])

    cuts = set(np.nonzero(cuttable)[0].tolist())
    for i in sorted(cuts):
        neighbours = [gaps[j] for j in (i - 1, i + 1) if 0 <= j < gaps.size]
        if neighbours and min(neighbours) >= gap_ratio * gaps[i]:
            cuts.discard(i)

    while cuts:
        groups = _partition(values.size, np.array(sorted(cuts), dtype=int))
        spreads = [values[g[-1]] - values[g[0]] for g in groups]
        violating = [c for position, c in enumerate(sorted(cuts))
                     if gaps[c] < gap_ratio * max(spreads[position], spreads[position + 1])]
        if not violating:
            break
        cuts.discard(min(violating, key=lambda c: gaps[c]))
    return _partition(values.size, np.array(sorted(cuts), dtype=int))


def _partition(size: int, cuts: np.ndarray) -> Tuple[Tuple[int, ...], ...]:
    bounds = [0] + [int(c) + 1 for c in sorted(cuts)] + [size]
    return tuple(tuple(range(a, b)) for a, b in zip(bounds, bounds[1:]) if b > a)


def rw_from_sym(sym_basis: EigenBasis, degrees: np.ndarray) -> EigenBasis:
    """N^rw eigenvectors u = D^-1/2 w from N^sym eigenvectors w, unit nu_n-norm"""
    degrees = _as_positive(degrees, sym_basis.vectors.shape[0], 'degrees')
    vectors = sym_basis.vectors / np.sqrt(degrees)[:, None]
    weights = sym_basis.weights
    vectors = vectors / np.sqrt(np.sum(weights[:, None] * vectors ** 2, axis=0))
    vectors = fix_signs(vectors, weights)
    return EigenBasis(vectors, weights, sym_basis.spectrum, sym_basis.residuals, orthonormal=False)


def rescale(value, n: int, eps: float, kind: str = 'unnormalized'):
    """2 lambda / (n eps^2) for L, 2 tau / eps^2 for the normalized Laplacians"""
    if n < 1 or eps <= 0:
        raise InvalidArgumentError(f"rescale needs n >= 1 and eps > 0, got n={n}, eps={eps}")
    if kind == 'unnormalized':
        return 2.0 * np.asarray(value) / (n * eps ** 2)
    if kind in ('sym', 'rw', 'normalized'):
        return 2.0 * np.asarray(value) / eps ** 2
    raise InvalidArgumentError(f"Unknown rescale kind '{kind}'")


def spectral_projection(basis: EigenBasis, group: Sequence[int], v: np.ndarray,
                        weights: Optional[np.ndarray] = None) -> np.ndarray:
    """sum_{j in group} <v, u_j>_w u_j"""
    weights = basis.weights if weights is None else np.asarray(weights, dtype=float)
    vectors = basis.group_vectors(group)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != vectors.shape[0]:
        raise InvalidArgumentError("Vector is not conformal with the eigenbasis")
    coefficients = vectors.T @ (weights * v)
    return vectors @ coefficients


def subspace_distance(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    """||P_A - P_B||_F for w-orthogonal projections onto span(a), span(b)"""
    a = np.atleast_2d(np.asarray(a, dtype=float).T).T
    b = np.atleast_2d(np.asarray(b, dtype=float).T).T
    if a.shape != b.shape:
        raise InvalidArgumentError(f"Subspace shapes differ: {a.shape} vs {b.shape}")
    root = np.sqrt(np.asarray(weights, dtype=float))[:, None]
    angles = sla.subspace_angles(root * a, root * b)
    return float(np.sqrt(2.0) * np.linalg.norm(np.sin(angles)))


def rayleigh_quotient(matrix, u: np.ndarray, mass: Optional[np.ndarray] = None) -> float:
    denominator = float(u @ (mass * u)) if mass is not None else float(u @ u)
    return float(u @ (matrix @ u)) / denominator


def constrained_minimum(matrix, constraints: Optional[np.ndarray], mass: Optional[np.ndarray] = None,
                        dense_threshold: int = 4096, seed: int = 0) -> float:
    """min of u^T A u / u^T M u over u M-orthogonal to the constraint columns"""
    n = matrix.shape[0]
    mass_root = np.sqrt(mass) if mass is not None else np.ones(n)
    scale = sp.diags(1.0 / mass_root)
    congruent = (scale @ sp.csr_matrix(matrix) @ scale)
    congruent = ((congruent + congruent.T) * 0.5).tocsr()
    if constraints is None or np.size(constraints) == 0:
        spectrum, _ = smallest_k(congruent, 1, dense_threshold=dense_threshold, seed=seed)
        return float(spectrum.values[0])
    constraints = np.atleast_2d(np.asarray(constraints, dtype=float).T).T
    lifted = mass_root[:, None] * constraints
    if n <= dense_threshold:
        complement = sla.null_space(lifted.T)
        reduced = complement.T @ (congruent @ complement)
        return float(sla.eigh((reduced + reduced.T) * 0.5, eigvals_only=True, subset_by_index=[0, 0])[0])
    orthonormal, _ = np.linalg.qr(lifted)
    norm = _matrix_norm(congruent)
    rng = np.random.default_rng(seed)
    values, _ = lobpcg(congruent, rng.standard_normal((n, 2)), Y=orthonormal,
                       M=_preconditioner(congruent.tocsc(), norm),
                       tol=RESIDUAL_RTOL * norm, maxiter=2000, largest=False)
    return float(np.min(values))


def courant_fischer_discrete(matrix, basis: EigenBasis, k_max: int = 5, trials: int = 200,
                             seed: int = 0, mass: Optional[np.ndarray] = None) -> List[dict]:
    """Random vectors constrained orthogonal to the first k-1 eigenvectors never beat lambda_k"""
    rng = np.random.default_rng(seed)
    values = basis.spectrum.values
    vectors = basis.vectors
    inner = mass if mass is not None else np.ones(vectors.shape[0])
    rows = []
    for k in range(1, min(k_max, basis.k) + 1):
        previous = vectors[:, :k - 1]
        samples = rng.standard_normal((vectors.shape[0], trials))
        if k > 1:
            # project out the first k-1 eigenvectors in the mass inner product
            gram = previous.T @ (inner[:, None] * previous)
            samples = samples - previous @ np.linalg.solve(gram, previous.T @ (inner[:, None] * samples))
        quotients = np.array([rayleigh_quotient(matrix, samples[:, t], mass) for t in range(trials)])
        attained = rayleigh_quotient(matrix, vectors[:, k - 1], mass)
        lam = float(values[k - 1])
        tolerance = 1e-6 * max(abs(lam), 1e-12)
        rows.append({
            'k': k,
            'eigenvalue': lam,
            'random_minimum': float(quotients.min()),
            'attained': attained,
            'passed': bool(quotients.min() >= lam - tolerance and abs(attained - lam) <= 1e-6 * max(abs(lam), 1.0)),
        })
    return rows
