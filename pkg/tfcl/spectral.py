"""Symmetric eigendecomposition and the closed-form U-update.

The U-update minimizes ``<L, U>`` over the set of symmetric U with
``0 <= U <= I`` and ``trace(U) = k``. Its optimal value is the sum of the k
smallest eigenvalues of L. When eigenvalues tie across position k the
minimizer is not unique; :func:`u_update` returns the one that spreads the
remaining weight evenly over the whole tied cluster, which does not depend
on how the eigensolver picked a basis of that cluster.
"""

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.linalg

from tfcl.bipartite import BipartiteLaplacian
from tfcl.exceptions import DegenerateInputError, SpectralError, ValidationError
from tfcl.logger import get_logger
from tfcl.utils import as_finite_array, check_square

logger = get_logger(__name__)

DEFAULT_GAP_TOL = 1e-8

SymmetricInput = Union[BipartiteLaplacian, np.ndarray]


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class SpectralSolution:
    """Result of the U-update.

    Attributes:
        U: Symmetric N x N solution.
        c: Eigenvalue weights, U = V diag(c) V^T.
        p: Number of eigenvalues taken with full weight.
        q: Last index (1-based) of the tied cluster straddling k.
        breve_delta: Smallest eigengap around the cluster; inf when the
            cluster touches either end of the spectrum.
        eig: Eigensystem the solution was assembled from.
    """

    U: np.ndarray
    c: np.ndarray
    p: int
    q: int
    breve_delta: float
    eig: EigenSystem

    @property
    def k(self) -> int:
        return int(round(float(self.c.sum())))


def _as_symmetric(A: SymmetricInput) -> np.ndarray:
    matrix = A.matrix if isinstance(A, BipartiteLaplacian) else A
    return as_finite_array(matrix, "A", ndim=2)


def sym_eig(A: SymmetricInput, sym_tol: float = 1e-10) -> EigenSystem:
    """Dense symmetric eigendecomposition with ascending eigenvalues.

    Args:
        A: Symmetric matrix or Laplacian.
        sym_tol: Allowed asymmetry relative to max|A|.

    Returns:
        EigenSystem: Eigenvalues ascending, eigenvectors as columns.

    Raises:
        SpectralError: If A is not symmetric or LAPACK does not converge.
        ValidationError: If A is not a finite square matrix.
    """
    matrix = _as_symmetric(A)
    check_square(matrix, "A")

    scale = max(float(np.max(np.abs(matrix))), 1.0)
    if np.max(np.abs(matrix - matrix.T)) > sym_tol * scale:
        raise SpectralError("Matrix is not symmetric within tolerance")

    symmetric = 0.5 * (matrix + matrix.T)
    try:
        values, vectors = scipy.linalg.eigh(symmetric)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SpectralError(f"Eigensolver did not converge: {e}") from e

    return EigenSystem(values=values, vectors=vectors)


def _check_k(k: int, n: int, upper_inclusive: bool) -> None:
    upper = n if upper_inclusive else n - 1
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or not 1 <= k <= upper:
        bound = "N" if upper_inclusive else "N-1"
        raise ValidationError(f"k must be an integer in [1, {bound}={upper}], got {k!r}")


def truncated_eig_sum(A: SymmetricInput, k: int) -> float:
    """Sum of the k smallest eigenvalues of A.

    Raises:
        ValidationError: If k is outside 1..N.
    """
    matrix = _as_symmetric(A)
    n = check_square(matrix, "A")
    _check_k(k, n, upper_inclusive=True)
    values = sym_eig(matrix).values
    return float(np.sum(values[:k]))


def spectral_weights(
    values: np.ndarray, k: int, gap_tol: float = DEFAULT_GAP_TOL
) -> Tuple[np.ndarray, int, int, float]:
    """Eigenvalue weights of the identifiable U-update solution.

    Position i (1-based, 1 <= i < N) is a break when
    ``values[i] - values[i-1] > gap_tol * (1 + |lambda_k|)``. Position 0
    always counts as a break, as does N. Then

    - p = the last break below k,
    - q = the first break at or above k,
    - c = 1 on 1..p, (k - p)/(q - p) on p+1..q, 0 above q.

    The break at 0 carries no eigenvalue: the gap below the cluster is
    +inf when p = 0 rather than lambda_1 - 0, and the gap above it is +inf
    when q = N. ``breve_delta`` is the smaller of the two.

    Args:
        values: Ascending eigenvalues.
        k: Target trace, 1 <= k < N.
        gap_tol: Relative tie tolerance.

    Returns:
        tuple: (c, p, q, breve_delta).
    """
    n = len(values)
    tol = gap_tol * (1.0 + abs(values[k - 1]))

    def is_break(i: int) -> bool:
        return i == 0 or i == n or bool(values[i] - values[i - 1] > tol)

    p = max(i for i in range(k) if is_break(i))
    q = min(i for i in range(k, n + 1) if is_break(i))

    c = np.zeros(n)
    c[:p] = 1.0
    c[p:q] = (k - p) / (q - p)

    delta_p = float(values[p] - values[p - 1]) if p > 0 else math.inf
    delta_q = float(values[q] - values[q - 1]) if q < n else math.inf
    return c, p, q, min(delta_p, delta_q)


def u_update(L: SymmetricInput, k: int, gap_tol: float = DEFAULT_GAP_TOL) -> SpectralSolution:
    """Closed-form minimizer of ``<L, U>`` over the feasible set.

    Args:
        L: Laplacian (or any symmetric matrix), not identically zero.
        k: Target trace, 1 <= k < N.
        gap_tol: Relative tie tolerance (> 0).

    Returns:
        SpectralSolution: U = V diag(c) V^T with its weights and gaps.

    Raises:
        DegenerateInputError: If L is the zero matrix.
        ValidationError: If k is outside 1..N-1 or gap_tol <= 0.
        SpectralError: If the eigensolve fails.
    """
    matrix = _as_symmetric(L)
    n = check_square(matrix, "L")
    _check_k(k, n, upper_inclusive=False)
    if not gap_tol > 0:
        raise ValidationError(f"gap_tol must be positive, got {gap_tol}")
    if not np.any(matrix):
        raise DegenerateInputError("U-update needs a nonzero Laplacian")

    eig = sym_eig(matrix)
    c, p, q, breve_delta = spectral_weights(eig.values, k, gap_tol)

    V = eig.vectors[:, :q]
    U = (V * c[:q]) @ V.T
    U = 0.5 * (U + U.T)

    logger.debug(f"U-update: k={k}, p={p}, q={q}, breve_delta={breve_delta:.3e}")
    return SpectralSolution(U=U, c=c, p=p, q=q, breve_delta=breve_delta, eig=eig)


def is_feasible(U: np.ndarray, k: int, tol: float = 1e-8) -> bool:
    """Whether U is symmetric with eigenvalues in [0, 1] and trace k."""
    U = as_finite_array(U, "U", ndim=2)
    if np.max(np.abs(U - U.T)) > tol:
        return False
    if abs(float(np.trace(U)) - k) > tol * max(1.0, k):
        return False
    eigenvalues = np.linalg.eigvalsh(0.5 * (U + U.T))
    return bool(eigenvalues[0] >= -tol and eigenvalues[-1] <= 1.0 + tol)


def bottom_embeddings(L: SymmetricInput, k: int) -> np.ndarray:
    """Bottom-k eigenvectors of L as an N x k matrix of node embeddings."""
    eig = sym_eig(L)
    _check_k(k, len(eig.values), upper_inclusive=True)
    return eig.vectors[:, :k].copy()
