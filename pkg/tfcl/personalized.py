"""Personalized model with consensus, group and personal components.

User i scores an instance x with ``(theta_c + theta_g[:, i] + theta_p[:, i])^T x``.
The objective is

    J(W) + lam_c/2 ||theta_c||^2 + lam_graph <L(|theta_g|), U>
         + lam_g/2 ||theta_g||_F^2 + lam_p sum_j ||theta_p[:, j]||

where W holds the effective per-user weights. theta_c captures what all
users share, theta_g is pushed towards k task-feature groups exactly like
the base model's W, and theta_p picks up the few users that fit no group
(its columns are exactly zero for everyone else).
"""

import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from tfcl.bipartite import build_laplacian, distance_matrix
from tfcl.config import QConfig, TFCLConfig, validate_qconfig
from tfcl.exceptions import ConvergenceError, ValidationError
from tfcl.logger import get_logger
from tfcl.losses import (
    AUCLoss,
    Loss,
    MultiTaskDataset,
    gradient_check,
    lipschitz_personalized,
    lipschitz_squared,
    make_loss,
    personalized_structural_bound,
)
from tfcl.prox import ProxWeights, column_group_prox, l2_prox, w_prox
from tfcl.solver import (
    WARM_START_RIDGE,
    FitHistory,
    IterationCallback,
    StoppingRule,
    graph_term,
    initial_U,
    resolve_step_constant,
)
from tfcl.spectral import SpectralSolution, u_update
from tfcl.utils import as_finite_array, power_iteration

logger = get_logger(__name__)

GRADIENT_CHECK_TOL = 1e-5


@dataclass(frozen=True, eq=False)
class PersonalizedParams:
    """Consensus vector plus group and personal weight matrices.

    Attributes:
        theta_c: Length-d consensus weights.
        theta_g: d x T group component.
        theta_p: d x T personal component.
    """

    theta_c: np.ndarray
    theta_g: np.ndarray
    theta_p: np.ndarray

    def __post_init__(self) -> None:
        theta_c = as_finite_array(self.theta_c, "theta_c", ndim=1)
        theta_g = as_finite_array(self.theta_g, "theta_g", ndim=2)
        theta_p = as_finite_array(self.theta_p, "theta_p", ndim=2)
        if theta_g.shape != theta_p.shape or theta_g.shape[0] != theta_c.shape[0]:
            raise ValidationError(
                f"Inconsistent shapes: theta_c {theta_c.shape}, theta_g {theta_g.shape}, "
                f"theta_p {theta_p.shape}"
            )
        object.__setattr__(self, "theta_c", theta_c)
        object.__setattr__(self, "theta_g", theta_g)
        object.__setattr__(self, "theta_p", theta_p)

    @classmethod
    def zeros(cls, d: int, T: int) -> "PersonalizedParams":
        return cls(np.zeros(d), np.zeros((d, T)), np.zeros((d, T)))

    @property
    def d(self) -> int:
        return self.theta_g.shape[0]

    @property
    def T(self) -> int:
        return self.theta_g.shape[1]

    def effective_weights(self) -> np.ndarray:
        """d x T matrix of per-user weights."""
        return self.theta_c[:, None] + self.theta_g + self.theta_p

    def outlier_users(self) -> List[int]:
        """Users whose personal column is nonzero."""
        return [int(j) for j in np.flatnonzero(np.linalg.norm(self.theta_p, axis=0) > 0)]


def objective_Q(
    params: PersonalizedParams,
    U: np.ndarray,
    data: MultiTaskDataset,
    cfg: QConfig,
    loss: Optional[Loss] = None,
) -> float:
    """Loss at the effective weights plus the four regularizers."""
    loss = loss or make_loss(cfg.loss)
    value = loss.value(params.effective_weights(), data)
    value += 0.5 * cfg.lam_c * float(params.theta_c @ params.theta_c)
    if cfg.lam_graph != 0:
        value += cfg.lam_graph * graph_term(params.theta_g, U, cfg.debug)
    value += 0.5 * cfg.lam_g * float(np.sum(params.theta_g**2))
    value += cfg.lam_p * float(np.sum(np.linalg.norm(params.theta_p, axis=0)))
    return float(value)


def _exact_lipschitz(data: MultiTaskDataset, loss: Loss, seed: int) -> float:
    """Largest Hessian eigenvalue of the loss in (theta_c, theta_g, theta_p).

    Both losses are quadratic, so a Hessian-vector product is the gradient
    difference ``grad(M v) - grad(0)`` pulled back through the map M from
    parameters to effective weights.
    """
    d, T = data.d, data.T
    G0 = loss.grad(np.zeros((d, T)), data)

    def matvec(v: np.ndarray) -> np.ndarray:
        vc = v[:d]
        vg = v[d : d + d * T].reshape(d, T)
        vp = v[d + d * T :].reshape(d, T)
        H = loss.grad(vc[:, None] + vg + vp, data) - G0
        return np.concatenate([H.sum(axis=1), H.ravel(), H.ravel()])

    return power_iteration(matvec, d * (1 + 2 * T), seed=seed)


def personalized_lipschitz(data: MultiTaskDataset, loss: Loss, cfg: QConfig) -> float:
    """Lipschitz constant of the loss gradient in the stacked parameters.

    "bound" uses the closed form (never below the structural bound
    ``(T + 2)`` times the per-task curvature); "exact" runs power iteration
    on Hessian-vector products.
    """
    if cfg.lipschitz == "exact":
        return _exact_lipschitz(data, loss, cfg.seed)
    if isinstance(loss, AUCLoss):
        return max(lipschitz_personalized(data), personalized_structural_bound(data))
    return (data.T + 2) * lipschitz_squared(data, seed=cfg.seed)


def initial_params(data: MultiTaskDataset, cfg: QConfig) -> PersonalizedParams:
    """Ridge fit of theta_c on pooled data (or all zeros for ``init="zero"``)."""
    params = PersonalizedParams.zeros(data.d, data.T)
    if cfg.init == "zero":
        return params
    X, y = data.pooled()
    ridge = max(cfg.lam_c, WARM_START_RIDGE)
    theta_c = np.linalg.solve(X.T @ X + ridge * np.eye(data.d), X.T @ y)
    return PersonalizedParams(theta_c, params.theta_g, params.theta_p)


def fit_personalized(
    data: MultiTaskDataset,
    cfg: Optional[QConfig] = None,
    callback: Optional[IterationCallback] = None,
) -> Tuple[PersonalizedParams, np.ndarray, FitHistory]:
    """Fit the personalized model.

    Every iteration takes one gradient step on all three components, then
    applies the ridge prox to theta_c, the group prox to theta_p, and one
    U-update followed by the distance-weighted prox to theta_g.

    Args:
        data: Training data (both classes per user for the AUC loss).
        cfg: Solver settings (defaults if None).
        callback: Called as ``callback(iteration, objective)``.

    Returns:
        tuple: (PersonalizedParams, U, FitHistory).

    Raises:
        DatasetError: A user misses a class under the AUC loss.
        ValidationError: Invalid settings or C not above the Lipschitz constant.
        ConvergenceError: The objective became non-finite.
    """
    cfg = cfg or QConfig()
    validate_qconfig(cfg)
    data.require_fit_ready()
    loss = make_loss(cfg.loss)
    loss.prepare(data)

    d, T = data.d, data.T
    if cfg.k >= d + T:
        raise ValidationError(f"k={cfg.k} must be smaller than d + T = {d + T}")

    rho = personalized_lipschitz(data, loss, cfg)
    C = resolve_step_constant(rho, cfg.C, cfg.safety)
    weights = ProxWeights(alpha1=cfg.lam_graph, alpha2=cfg.lam_g, C=C)

    params = initial_params(data, cfg)
    U, _ = initial_U(params.theta_g, cfg.k, cfg.gap_tol)

    if cfg.debug:
        error = gradient_check(loss, params.effective_weights(), data, seed=cfg.seed)
        if error > GRADIENT_CHECK_TOL:
            raise ValidationError(f"Loss gradient fails the finite-difference check ({error:.2e})")

    history = FitHistory(lipschitz=rho, C=C)
    objective = objective_Q(params, U, data, cfg, loss)
    if not math.isfinite(objective):
        raise ConvergenceError("Objective is not finite at the starting point", iteration=0)
    history.initial_objective = objective

    logger.info(
        f"Fitting personalized model: d={d}, T={T}, k={cfg.k}, loss={loss.name}, "
        f"lipschitz={rho:.6g} ({cfg.lipschitz}), C={C:.6g}"
    )

    subgradient_scale = C + rho + cfg.lam_graph * (math.sqrt(d) + math.sqrt(T) + 2.0)
    stopping = StoppingRule(cfg.tol_param, cfg.tol_obj, cfg.obj_patience)

    for t in range(1, cfg.max_iters + 1):
        start = time.perf_counter()

        G = loss.grad(params.effective_weights(), data)
        theta_c = l2_prox(params.theta_c - G.sum(axis=1) / C, cfg.lam_c / C)
        theta_p = column_group_prox(params.theta_p - G / C, cfg.lam_p / C)

        laplacian = build_laplacian(params.theta_g)
        solution: Optional[SpectralSolution] = None
        if laplacian.is_zero:
            U_new = U
            logger.debug(f"Iteration {t}: theta_g is zero, keeping U unchanged")
        else:
            solution = u_update(laplacian, cfg.k, cfg.gap_tol)
            U_new = solution.U
        theta_g = w_prox(params.theta_g - G / C, distance_matrix(U_new, d, T), weights)

        new_params = PersonalizedParams(theta_c, theta_g, theta_p)
        objective_new = objective_Q(new_params, U_new, data, cfg, loss)
        if not math.isfinite(objective_new):
            raise ConvergenceError(f"Objective became non-finite at iteration {t}", iteration=t)

        delta_theta = math.sqrt(
            float(np.sum((theta_c - params.theta_c) ** 2))
            + float(np.sum((theta_g - params.theta_g) ** 2))
            + float(np.sum((theta_p - params.theta_p) ** 2))
        )
        delta_U = float(np.linalg.norm(U_new - U))
        history.record(
            objective=objective_new,
            delta_W=delta_theta,
            delta_U=delta_U,
            subgradient_bound=subgradient_scale * math.hypot(delta_theta, delta_U),
            breve_delta=solution.breve_delta if solution else math.nan,
            wall_time=time.perf_counter() - start,
            degenerate=solution is None,
            grad_inf_norm=float(np.max(np.abs(G))),
        )
        if solution is not None and t <= cfg.record_embeddings:
            history.embeddings[t] = solution.eig.vectors[:, : cfg.k].copy()

        logger.debug(f"Iteration {t}: objective={objective_new:.10g}, dTheta={delta_theta:.3e}")
        if callback is not None:
            callback(t, objective_new)

        reason = stopping.check(delta_theta + delta_U, objective, objective_new)
        params, U, objective = new_params, U_new, objective_new
        if reason:
            history.converged = True
            history.stop_reason = reason
            break
    else:
        history.stop_reason = "max_iters"

    logger.info(
        f"Personalized fit finished after {len(history)} iterations ({history.stop_reason}), "
        f"objective={history.final_objective:.10g}, outlier users={len(params.outlier_users())}"
    )
    return params, U, history


def predict(params: PersonalizedParams, X: np.ndarray, user: int) -> np.ndarray:
    """Scores of user ``user`` for the rows of X.

    Raises:
        ValidationError: On a feature-count mismatch or an unknown user.
    """
    X = as_finite_array(X, "X", ndim=2)
    if X.shape[1] != params.d:
        raise ValidationError(f"X has {X.shape[1]} features, model has {params.d}")
    if not 0 <= user < params.T:
        raise ValidationError(f"User index {user} out of range 0..{params.T - 1}")
    return X @ params.effective_weights()[:, user]


def lasso_baseline(
    data: MultiTaskDataset, lam: float, cfg: Optional[Union[TFCLConfig, QConfig]] = None
) -> np.ndarray:
    """Independent l1-regularized least squares per task, solved by ISTA.

    Each task minimizes ``1/2 ||y_i - X_i w||^2 + lam ||w||_1`` from w = 0
    with step ``1 / (safety * ||X_i^T X_i||)`` and the stopping rule of
    ``cfg``.

    Returns:
        np.ndarray: d x T weight matrix.
    """
    if lam < 0:
        raise ValidationError(f"lam must be >= 0, got {lam}")
    cfg = cfg or TFCLConfig()
    data.require_fit_ready()

    W = np.zeros((data.d, data.T))
    ones = np.ones((data.d, 1))
    for i, (x, v) in enumerate(zip(data.X, data.y)):
        rho = power_iteration(lambda u, x=x: x.T @ (x @ u), data.d, seed=cfg.seed)
        C = resolve_step_constant(rho, None, cfg.safety)
        weights = ProxWeights(alpha1=lam, alpha2=0.0, C=C)

        w = np.zeros(data.d)
        objective = 0.5 * float(v @ v)
        stopping = StoppingRule(cfg.tol_param, cfg.tol_obj, cfg.obj_patience)
        for _ in range(cfg.max_iters):
            step = w - (x.T @ (x @ w - v)) / C
            w_new = w_prox(step[:, None], ones, weights)[:, 0]
            residual = x @ w_new - v
            objective_new = 0.5 * float(residual @ residual) + lam * float(np.sum(np.abs(w_new)))
            reason = stopping.check(float(np.linalg.norm(w_new - w)), objective, objective_new)
            w, objective = w_new, objective_new
            if reason:
                break
        W[:, i] = w

    logger.debug(f"LASSO baseline fitted {data.T} tasks with lam={lam}")
    return W
