"""Task-feature bipartite graph.

Features are nodes ``0..d-1`` and tasks are nodes ``d..d+T-1``. Feature i
and task j are joined by an edge of weight ``|W[i, j]|``; no other edges
exist. The Laplacian of this graph has exactly k zero eigenvalues when the
graph has k connected components, which is what the spectral regularizer
drives W towards.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _csgraph_components

from tfcl.exceptions import ValidationError
from tfcl.utils import as_finite_array

# A task matrix is a plain d x T float array; as_task_matrix enforces the
# invariants (finite, d >= 1, T >= 1).
TaskMatrix = np.ndarray

DEFAULT_RELATIVE_THRESHOLD = 1e-8


def as_task_matrix(W: object, name: str = "W") -> TaskMatrix:
    """Validate a d x T weight matrix.

    Raises:
        ValidationError: If W is not 2-D, is empty or holds non-finite entries.
    """
    matrix = as_finite_array(W, name, ndim=2)
    if matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ValidationError(f"{name} needs d >= 1 and T >= 1, got shape {matrix.shape}")
    return matrix


@dataclass(frozen=True)
class BipartiteLaplacian:
    """Laplacian ``diag(A 1) - A`` of the task-feature graph.

    Attributes:
        matrix: (d+T) x (d+T) symmetric matrix.
        d: Number of feature nodes.
        T: Number of task nodes.
    """

    matrix: np.ndarray
    d: int
    T: int

    @property
    def size(self) -> int:
        return self.d + self.T

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrix)

    def check_invariants(self) -> None:
        """Assert symmetry, zero row sums, sign pattern and PSD-ness.

        Raises:
            ValidationError: If any invariant fails.
        """
        L = self.matrix
        scale = float(np.max(np.abs(L))) if L.size else 0.0
        if L.shape != (self.size, self.size):
            raise ValidationError(f"Laplacian shape {L.shape} does not match d+T={self.size}")
        if np.max(np.abs(L - L.T), initial=0.0) > 1e-12 * max(scale, 1.0):
            raise ValidationError("Laplacian is not symmetric")
        if np.max(np.abs(L.sum(axis=1)), initial=0.0) > 1e-10 * max(scale, 1.0):
            raise ValidationError("Laplacian rows do not sum to zero")
        off_diagonal = L - np.diag(np.diag(L))
        if np.any(off_diagonal > 0):
            raise ValidationError("Laplacian has positive off-diagonal entries")
        if scale > 0:
            eigenvalues = np.linalg.eigvalsh(L)
            if eigenvalues[0] < -1e-8 * eigenvalues[-1]:
                raise ValidationError(f"Laplacian is not PSD (min eigenvalue {eigenvalues[0]})")


@dataclass(frozen=True)
class Grouping:
    """Connected components of the task-feature graph.

    Attributes:
        labels: Component id of every node, features first then tasks.
        count: Number of components.
        d: Number of feature nodes.
    """

    labels: np.ndarray
    count: int
    d: int

    @property
    def feature_labels(self) -> np.ndarray:
        return self.labels[: self.d]

    @property
    def task_labels(self) -> np.ndarray:
        return self.labels[self.d :]

    def sizes(self) -> List[int]:
        """Node count of each component, largest first."""
        return sorted(np.bincount(self.labels, minlength=self.count).tolist(), reverse=True)


def affinity(W: TaskMatrix) -> np.ndarray:
    """Affinity matrix with |W| in the off-diagonal blocks."""
    W = as_task_matrix(W)
    d, T = W.shape
    A = np.zeros((d + T, d + T))
    A[:d, d:] = np.abs(W)
    A[d:, :d] = np.abs(W).T
    return A


def build_laplacian(W: TaskMatrix) -> BipartiteLaplacian:
    """Laplacian ``diag(A 1) - A`` of the task-feature graph of W.

    Args:
        W: d x T weight matrix.

    Returns:
        BipartiteLaplacian: The graph Laplacian.

    Raises:
        ValidationError: If W has non-finite entries or is not 2-D.
    """
    A = affinity(W)
    d, T = np.shape(W)
    L = np.diag(A.sum(axis=1)) - A
    return BipartiteLaplacian(matrix=L, d=d, T=T)


def distance_matrix(U: np.ndarray, d: int, T: int) -> np.ndarray:
    """Embedding distances between features and tasks.

    ``D[i, j] = U[i, i] + U[d+j, d+j] - 2 U[i, d+j]``, which equals
    ``||f_i - f_{d+j}||^2`` when U = V V^T. The formula reads U directly so
    fractional eigenvector weights carry through. Round-off negatives are
    clamped to 0.

    Args:
        U: (d+T) x (d+T) symmetric matrix.
        d: Number of features.
        T: Number of tasks.

    Returns:
        np.ndarray: d x T non-negative matrix.

    Raises:
        ValidationError: If U does not have shape (d+T, d+T).
    """
    U = as_finite_array(U, "U", ndim=2)
    if d < 1 or T < 1 or U.shape != (d + T, d + T):
        raise ValidationError(f"U has shape {U.shape}, expected ({d + T}, {d + T})")

    diag = np.diag(U)
    cross = 0.5 * (U[:d, d:] + U[d:, :d].T)
    D = diag[:d, None] + diag[None, d:] - 2.0 * cross
    return np.maximum(D, 0.0)


def default_threshold(W: TaskMatrix) -> float:
    """Support threshold ``1e-8 * max|W|``."""
    W = as_task_matrix(W)
    return DEFAULT_RELATIVE_THRESHOLD * float(np.max(np.abs(W)))


def connected_components(W: TaskMatrix, threshold: Optional[float] = None) -> Grouping:
    """Connected components of the graph with edges ``|W[i, j]| > threshold``.

    Isolated nodes form singleton components.

    Args:
        W: d x T weight matrix.
        threshold: Edge cutoff >= 0; None uses :func:`default_threshold`.

    Returns:
        Grouping: Component labels for features then tasks.

    Raises:
        ValidationError: If the threshold is negative or W is invalid.
    """
    W = as_task_matrix(W)
    if threshold is None:
        threshold = default_threshold(W)
    if threshold < 0:
        raise ValidationError(f"threshold must be >= 0, got {threshold}")

    d, T = W.shape
    edges = np.abs(W) > threshold
    rows, cols = np.nonzero(edges)
    graph = csr_matrix(
        (np.ones(rows.size), (rows, cols + d)),
        shape=(d + T, d + T),
    )
    count, labels = _csgraph_components(graph, directed=False)
    return Grouping(labels=labels.astype(np.int64), count=int(count), d=d)


def embeddings(V: np.ndarray) -> List[np.ndarray]:
    """Rows f_1..f_{d+T} of a bottom-eigenvector matrix.

    Args:
        V: (d+T) x k matrix whose columns are eigenvectors.

    Returns:
        list: One length-k vector per node.
    """
    V = as_finite_array(V, "V", ndim=2)
    return [row.copy() for row in V]
