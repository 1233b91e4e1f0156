"""Empirical losses of the multi-task models.

Two losses share one interface:

- :class:`SquaredLoss`: ``sum_i 1/2 ||y_i - X_i W_i||^2``.
- :class:`AUCLoss`: the squared AUC surrogate, the sum over tasks of
  ``sum_{p in S+, q in S-} (1 - (s_p - s_q))^2 / (n+ n-)``. Writing the
  residual ``r = X_i W_i - y~`` with ``y~ = (1 + y) / 2`` this equals
  ``r^T L_AUC r`` for the Laplacian of the complete positive/negative
  comparison graph, which is evaluated in O(n d) per task from the degree
  vector and the class means of r.

Per-task terms are collected first and reduced with ``np.sum`` so the
result does not depend on evaluation order.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import roc_auc_score

from tfcl.exceptions import DatasetError, ValidationError
from tfcl.logger import get_logger
from tfcl.utils import as_finite_array, power_iteration

logger = get_logger(__name__)

LIPSCHITZ_TOL = 1e-6
LIPSCHITZ_MAX_ITER = 500


@dataclass(frozen=True, eq=False)
class MultiTaskDataset:
    """Per-task feature matrices and labels.

    Attributes:
        X: One n_i x d matrix per task.
        y: One length-n_i label vector per task; {-1, +1} for AUC losses,
            any real values for the squared loss.
        task_ids: Identifier of each task (defaults to "0", "1", ...).

    A task may hold zero rows so that train/validation/test partitions stay
    aligned; :meth:`require_fit_ready` rejects such datasets for fitting.
    """

    X: Tuple[np.ndarray, ...]
    y: Tuple[np.ndarray, ...]
    task_ids: Tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.X) != len(self.y):
            raise ValidationError(f"{len(self.X)} feature matrices but {len(self.y)} label vectors")
        if len(self.X) < 1:
            raise ValidationError("A dataset needs at least one task")

        X = tuple(as_finite_array(x, f"X[{i}]", ndim=2) for i, x in enumerate(self.X))
        y = tuple(as_finite_array(v, f"y[{i}]", ndim=1) for i, v in enumerate(self.y))

        d = X[0].shape[1]
        for i, (x, v) in enumerate(zip(X, y)):
            if x.shape[1] != d:
                raise ValidationError(f"Task {i} has {x.shape[1]} features, expected {d}")
            if x.shape[0] != v.shape[0]:
                raise ValidationError(f"Task {i} has {x.shape[0]} rows but {v.shape[0]} labels")
        if d < 1:
            raise ValidationError("A dataset needs at least one feature")

        task_ids = tuple(str(t) for t in self.task_ids) or tuple(str(i) for i in range(len(X)))
        if len(task_ids) != len(X):
            raise ValidationError(f"{len(task_ids)} task ids for {len(X)} tasks")
        if len(set(task_ids)) != len(task_ids):
            raise ValidationError("Task ids must be unique")

        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "task_ids", task_ids)

    @property
    def T(self) -> int:
        return len(self.X)

    @property
    def d(self) -> int:
        return self.X[0].shape[1]

    @property
    def n(self) -> np.ndarray:
        return np.array([x.shape[0] for x in self.X], dtype=np.int64)

    @property
    def n_pos(self) -> np.ndarray:
        return np.array([int(np.sum(v == 1)) for v in self.y], dtype=np.int64)

    @property
    def n_neg(self) -> np.ndarray:
        return np.array([int(np.sum(v == -1)) for v in self.y], dtype=np.int64)

    def y_tilde(self, i: int) -> np.ndarray:
        """0/1 encoding ``(1 + y) / 2`` of task i."""
        return (1.0 + self.y[i]) / 2.0

    def require_fit_ready(self) -> None:
        """Raise DatasetError if any task has no rows."""
        empty = [self.task_ids[i] for i, n in enumerate(self.n) if n < 1]
        if empty:
            raise DatasetError(f"Tasks without rows: {', '.join(empty)}")

    def require_both_classes(self) -> None:
        """Raise DatasetError unless every task has +1 and -1 labels only, both present."""
        self.require_fit_ready()
        for i, labels in enumerate(self.y):
            if not np.all(np.isin(labels, (-1.0, 1.0))):
                raise DatasetError(f"Task {self.task_ids[i]} has labels outside {{-1, +1}}")
        missing = [
            self.task_ids[i]
            for i in range(self.T)
            if self.n_pos[i] < 1 or self.n_neg[i] < 1
        ]
        if missing:
            raise DatasetError(f"Tasks missing a class: {', '.join(missing)}")

    def select_tasks(self, indices: Sequence[int]) -> "MultiTaskDataset":
        """Dataset restricted to the given tasks, in the given order."""
        return MultiTaskDataset(
            X=tuple(self.X[i] for i in indices),
            y=tuple(self.y[i] for i in indices),
            task_ids=tuple(self.task_ids[i] for i in indices),
        )

    def pooled(self) -> Tuple[np.ndarray, np.ndarray]:
        """All rows stacked into one (X, y) pair."""
        return np.vstack(self.X), np.concatenate(self.y)


def _check_weights(W: np.ndarray, data: MultiTaskDataset) -> np.ndarray:
    W = as_finite_array(W, "W", ndim=2)
    if W.shape != (data.d, data.T):
        raise ValidationError(f"W has shape {W.shape}, expected ({data.d}, {data.T})")
    return W


def _effective(params: object) -> np.ndarray:
    if hasattr(params, "effective_weights"):
        return params.effective_weights()  # type: ignore[attr-defined]
    return np.asarray(params, dtype=np.float64)


def squared_loss_value(W: np.ndarray, data: MultiTaskDataset) -> float:
    """``sum_i 1/2 ||y_i - X_i W_i||^2``.

    Raises:
        ValidationError: If W is not d x T.
    """
    W = _check_weights(W, data)
    terms = [
        0.5 * float(np.sum((x @ W[:, i] - v) ** 2))
        for i, (x, v) in enumerate(zip(data.X, data.y))
    ]
    return float(np.sum(terms))


def squared_loss_grad(W: np.ndarray, data: MultiTaskDataset) -> np.ndarray:
    """Column i is ``X_i^T (X_i W_i - y_i)``."""
    W = _check_weights(W, data)
    G = np.zeros_like(W)
    for i, (x, v) in enumerate(zip(data.X, data.y)):
        G[:, i] = x.T @ (x @ W[:, i] - v)
    return G


@dataclass(frozen=True, eq=False)
class TaskAUCGraph:
    """Comparison graph of one task.

    Attributes:
        y_tilde: 0/1 labels.
        degree: ``y~ / n+ + (1 - y~) / n-``; every entry is positive.
        n_pos: Number of positives.
        n_neg: Number of negatives.
    """

    y_tilde: np.ndarray
    degree: np.ndarray
    n_pos: int
    n_neg: int

    def apply(self, r: np.ndarray) -> np.ndarray:
        """``L_AUC r`` without forming L_AUC."""
        r_pos = float(self.y_tilde @ r) / self.n_pos
        r_neg = float((1.0 - self.y_tilde) @ r) / self.n_neg
        return self.degree * r - self.y_tilde * (r_neg / self.n_pos) - (1.0 - self.y_tilde) * (
            r_pos / self.n_neg
        )

    def quadratic(self, r: np.ndarray) -> float:
        """``r^T L_AUC r`` from the degree vector and class means."""
        r_pos = float(self.y_tilde @ r) / self.n_pos
        r_neg = float((1.0 - self.y_tilde) @ r) / self.n_neg
        return float(self.degree @ (r * r)) - 2.0 * r_pos * r_neg

    def laplacian(self) -> np.ndarray:
        """Dense L_AUC (small instances and checks only)."""
        pair = np.outer(self.y_tilde, 1.0 - self.y_tilde)
        affinity = (pair + pair.T) / (self.n_pos * self.n_neg)
        return np.diag(affinity.sum(axis=1)) - affinity


@dataclass(frozen=True, eq=False)
class AUCGraphCache:
    """Comparison graphs of all tasks of one dataset."""

    tasks: Tuple[TaskAUCGraph, ...]


def build_auc_cache(data: MultiTaskDataset) -> AUCGraphCache:
    """Precompute per-task comparison graphs.

    Raises:
        DatasetError: If a task misses a class or has non +/-1 labels.
    """
    data.require_both_classes()
    tasks = []
    for i in range(data.T):
        y_tilde = data.y_tilde(i)
        n_pos, n_neg = int(data.n_pos[i]), int(data.n_neg[i])
        degree = y_tilde / n_pos + (1.0 - y_tilde) / n_neg
        tasks.append(TaskAUCGraph(y_tilde=y_tilde, degree=degree, n_pos=n_pos, n_neg=n_neg))
    return AUCGraphCache(tasks=tuple(tasks))


def _cache_for(data: MultiTaskDataset, cache: Optional[AUCGraphCache]) -> AUCGraphCache:
    if cache is None:
        return build_auc_cache(data)
    if len(cache.tasks) != data.T:
        raise ValidationError(f"AUC cache has {len(cache.tasks)} tasks, dataset has {data.T}")
    return cache


def auc_loss_value(
    params: object, data: MultiTaskDataset, cache: Optional[AUCGraphCache] = None
) -> float:
    """Squared AUC surrogate summed over tasks.

    Args:
        params: d x T weight matrix, or personalized parameters.
        data: Dataset with both classes in every task.
        cache: Comparison graphs; built on the fly when None.

    Returns:
        float: The pairwise loss.

    Raises:
        DatasetError: If a task misses a class.
    """
    cache = _cache_for(data, cache)
    W = _check_weights(_effective(params), data)
    terms = [
        graph.quadratic(x @ W[:, i] - graph.y_tilde)
        for i, (x, graph) in enumerate(zip(data.X, cache.tasks))
    ]
    return float(np.sum(terms))


def auc_loss_grad_weights(
    W: np.ndarray, data: MultiTaskDataset, cache: Optional[AUCGraphCache] = None
) -> np.ndarray:
    """Gradient of :func:`auc_loss_value` with respect to a d x T matrix.

    Column i is ``2 X_i^T L_AUC (X_i W_i - y~_i)``.
    """
    cache = _cache_for(data, cache)
    W = _check_weights(W, data)
    G = np.zeros_like(W)
    for i, (x, graph) in enumerate(zip(data.X, cache.tasks)):
        G[:, i] = 2.0 * (x.T @ graph.apply(x @ W[:, i] - graph.y_tilde))
    return G


def auc_loss_grad(
    params: object, data: MultiTaskDataset, cache: Optional[AUCGraphCache] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients with respect to theta_c, theta_g and theta_p.

    The loss depends on the parameters only through the effective weights
    ``theta_c + theta_g + theta_p``, so the theta_g and theta_p gradients
    equal the weight gradient and the theta_c gradient is its row sum.

    Returns:
        tuple: (grad_c of length d, grad_g d x T, grad_p d x T).
    """
    G = auc_loss_grad_weights(_effective(params), data, cache)
    return G.sum(axis=1), G, G.copy()


def lipschitz_squared(data: MultiTaskDataset, seed: int = 0) -> float:
    """``max_i ||X_i^T X_i||_2`` by power iteration."""
    best = 0.0
    for x in data.X:
        if x.shape[0] == 0:
            continue
        value = power_iteration(
            lambda v, x=x: x.T @ (x @ v),
            data.d,
            tol=LIPSCHITZ_TOL,
            max_iter=LIPSCHITZ_MAX_ITER,
            seed=seed,
        )
        best = max(best, value)
    return best


def lipschitz_auc(
    data: MultiTaskDataset, cache: Optional[AUCGraphCache] = None, seed: int = 0
) -> float:
    """``max_i ||2 X_i^T L_AUC X_i||_2`` by power iteration."""
    cache = _cache_for(data, cache)
    best = 0.0
    for x, graph in zip(data.X, cache.tasks):
        value = power_iteration(
            lambda v, x=x, graph=graph: 2.0 * (x.T @ graph.apply(x @ v)),
            data.d,
            tol=LIPSCHITZ_TOL,
            max_iter=LIPSCHITZ_MAX_ITER,
            seed=seed,
        )
        best = max(best, value)
    return best


def _auc_scale(data: MultiTaskDataset) -> float:
    data.require_both_classes()
    return max(
        float(data.n[i]) * float(np.linalg.norm(data.X[i], 2)) ** 2
        / float(data.n_pos[i] * data.n_neg[i])
        for i in range(data.T)
    )


def lipschitz_personalized(data: MultiTaskDataset) -> float:
    """Closed-form constant ``3T sqrt(2T+1) max_i n_i ||X_i||^2 / (n+_i n-_i)``.

    Raises:
        DatasetError: If a task misses a class.
    """
    T = data.T
    return 3.0 * T * float(np.sqrt(2 * T + 1)) * _auc_scale(data)


def personalized_structural_bound(data: MultiTaskDataset) -> float:
    """``2 (T+2) max_i n_i ||X_i||^2 / (n+_i n-_i)``.

    The map (theta_c, theta_g, theta_p) -> W has squared norm T + 2 and the
    pairwise AUC loss has curvature at most ``2 n ||X||^2 / (n+ n-)`` per
    task, so this always bounds the personalized gradient's Lipschitz
    constant. It exceeds the closed form only for T = 1.
    """
    return 2.0 * (data.T + 2) * _auc_scale(data)


class Loss(ABC):
    """Loss interface used by the solvers."""

    name: str = "loss"

    @abstractmethod
    def value(self, W: np.ndarray, data: MultiTaskDataset) -> float:
        """Loss at the d x T weight matrix W."""

    @abstractmethod
    def grad(self, W: np.ndarray, data: MultiTaskDataset) -> np.ndarray:
        """Gradient with respect to W."""

    @abstractmethod
    def lipschitz(self, data: MultiTaskDataset, seed: int = 0) -> float:
        """Lipschitz constant of the gradient in W."""

    def prepare(self, data: MultiTaskDataset) -> None:
        """Check that the dataset suits this loss."""
        data.require_fit_ready()


class SquaredLoss(Loss):
    """Instance-wise squared loss."""

    name = "squared"

    def value(self, W: np.ndarray, data: MultiTaskDataset) -> float:
        return squared_loss_value(W, data)

    def grad(self, W: np.ndarray, data: MultiTaskDataset) -> np.ndarray:
        return squared_loss_grad(W, data)

    def lipschitz(self, data: MultiTaskDataset, seed: int = 0) -> float:
        return lipschitz_squared(data, seed=seed)


class AUCLoss(Loss):
    """Squared AUC surrogate; caches comparison graphs per dataset."""

    name = "auc"

    def __init__(self) -> None:
        self._data: Optional[MultiTaskDataset] = None
        self._cache: Optional[AUCGraphCache] = None

    def cache(self, data: MultiTaskDataset) -> AUCGraphCache:
        if self._data is not data or self._cache is None:
            self._cache = build_auc_cache(data)
            self._data = data
        return self._cache

    def prepare(self, data: MultiTaskDataset) -> None:
        self.cache(data)

    def value(self, W: np.ndarray, data: MultiTaskDataset) -> float:
        return auc_loss_value(W, data, self.cache(data))

    def grad(self, W: np.ndarray, data: MultiTaskDataset) -> np.ndarray:
        return auc_loss_grad_weights(W, data, self.cache(data))

    def lipschitz(self, data: MultiTaskDataset, seed: int = 0) -> float:
        return lipschitz_auc(data, self.cache(data), seed=seed)


def make_loss(name: str) -> Loss:
    """Loss instance by name ("squared" or "auc").

    Raises:
        ValidationError: For an unknown name.
    """
    if name == "squared":
        return SquaredLoss()
    if name == "auc":
        return AUCLoss()
    raise ValidationError(f"Invalid loss: {name}. Must be one of: squared, auc")


def gradient_check(
    loss: Loss,
    W: np.ndarray,
    data: MultiTaskDataset,
    directions: int = 5,
    seed: int = 0,
) -> float:
    """Largest relative error between analytic and central-difference slopes.

    Slopes are compared along ``directions`` random unit directions with
    step ``h = 1e-5 * max(1, ||W||)``.
    """
    W = _check_weights(W, data)
    G = loss.grad(W, data)
    rng = np.random.default_rng(seed)
    h = 1e-5 * max(1.0, float(np.linalg.norm(W)))
    worst = 0.0
    for _ in range(directions):
        E = rng.standard_normal(W.shape)
        E /= np.linalg.norm(E)
        numeric = (loss.value(W + h * E, data) - loss.value(W - h * E, data)) / (2.0 * h)
        analytic = float(np.sum(G * E))
        scale = max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst


def user_auc_scores(
    scores: Sequence[np.ndarray], labels: Sequence[np.ndarray]
) -> np.ndarray:
    """Per-user Mann-Whitney AUC with ties counted one half.

    Users without both classes get NaN.
    """
    if len(scores) != len(labels):
        raise ValidationError(f"{len(scores)} score vectors for {len(labels)} label vectors")
    result = np.full(len(scores), np.nan)
    for i, (s, v) in enumerate(zip(scores, labels)):
        s = np.asarray(s, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if s.shape != v.shape:
            raise ValidationError(f"User {i}: {s.shape[0]} scores for {v.shape[0]} labels")
        if np.any(v == 1) and np.any(v != 1):
            result[i] = roc_auc_score(v == 1, s)
    return result


def auc_metric(scores: Sequence[np.ndarray], labels: Sequence[np.ndarray]) -> float:
    """Average of the per-user AUC over users that have both classes.

    Raises:
        DatasetError: If no user has both classes.
    """
    per_user = user_auc_scores(scores, labels)
    evaluable = per_user[~np.isnan(per_user)]
    skipped = per_user.size - evaluable.size
    if skipped:
        logger.debug(f"AUC skips {skipped} user(s) without both classes")
    if evaluable.size == 0:
        raise DatasetError("No user has both classes; AUC is undefined")
    return float(np.mean(evaluable))


def dataset_scores(W: np.ndarray, data: MultiTaskDataset) -> List[np.ndarray]:
    """Scores ``X_i W_i`` of every task."""
    W = _check_weights(W, data)
    return [x @ W[:, i] for i, x in enumerate(data.X)]


def dataset_auc(W: Union[np.ndarray, object], data: MultiTaskDataset) -> float:
    """Mean user AUC of weights (or personalized parameters) on a dataset."""
    return auc_metric(dataset_scores(_effective(W), data), data.y)
