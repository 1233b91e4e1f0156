"""Alternating solver for the base model.

The objective is

    F(W, U) = J(W) + alpha1 <L(W), U> + alpha2/2 ||W||_F^2

with J a pluggable loss, L(W) the task-feature Laplacian and U restricted to
symmetric matrices with ``0 <= U <= I`` and ``trace(U) = k``. Each outer
iteration

1. builds L from the previous W and sets U by the closed-form U-update,
2. takes a gradient step on J with step 1/C,
3. applies the distance-weighted elastic-net prox with D from the new U.

Both steps minimize a majorizer of F, so the recorded objective never
increases when C exceeds the Lipschitz constant of the loss gradient.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from tfcl.bipartite import as_task_matrix, build_laplacian, distance_matrix
from tfcl.config import TFCLConfig, validate_tfcl_config
from tfcl.exceptions import ConvergenceError, DegenerateInputError, ValidationError
from tfcl.logger import get_logger
from tfcl.losses import Loss, MultiTaskDataset
from tfcl.prox import ProxWeights, w_prox
from tfcl.spectral import SpectralSolution, u_update

logger = get_logger(__name__)

DESCENT_TOL = 1e-9
TRACE_CHECK_TOL = 1e-8
WARM_START_RIDGE = 1e-3

IterationCallback = Callable[[int, float], None]


@dataclass
class FitHistory:
    """Per-iteration record of a fit.

    All per-iteration lists have the same length, one entry per outer
    iteration. ``breve_delta`` is NaN on degenerate iterations (W = 0),
    where U is carried over unchanged.

    Attributes:
        objective: Objective after the iteration.
        delta_W: ||W^t - W^{t-1}||_F (all parameter blocks for the
            personalized model).
        delta_U: ||U^t - U^{t-1}||_F.
        subgradient_bound: Upper bound on the distance of 0 to the
            subdifferential at the new iterate.
        breve_delta: Eigengap around the tied cluster at position k.
        wall_time: Seconds spent in the iteration.
        degenerate: Whether L was zero and U was frozen.
        grad_inf_norm: Max-norm of the loss gradient at the previous iterate.
        initial_objective: Objective at the starting point.
        lipschitz: Lipschitz constant used to pick C.
        C: Step constant.
        converged: Whether a tolerance stopped the run.
        stop_reason: "tol_param", "tol_obj" or "max_iters".
        descent_violations: Iterations whose objective rose by more than
            1e-9 (1 + |previous|).
        embeddings: Bottom-k eigenvectors of L at the first iterations.
    """

    objective: List[float] = field(default_factory=list)
    delta_W: List[float] = field(default_factory=list)
    delta_U: List[float] = field(default_factory=list)
    subgradient_bound: List[float] = field(default_factory=list)
    breve_delta: List[float] = field(default_factory=list)
    wall_time: List[float] = field(default_factory=list)
    degenerate: List[bool] = field(default_factory=list)
    grad_inf_norm: List[float] = field(default_factory=list)
    initial_objective: float = math.nan
    lipschitz: float = math.nan
    C: float = math.nan
    converged: bool = False
    stop_reason: str = ""
    descent_violations: int = 0
    embeddings: Dict[int, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.objective)

    def record(
        self,
        objective: float,
        delta_W: float,
        delta_U: float,
        subgradient_bound: float,
        breve_delta: float,
        wall_time: float,
        degenerate: bool,
        grad_inf_norm: float,
    ) -> None:
        """Append one iteration and count a descent violation if any."""
        previous = self.objective[-1] if self.objective else self.initial_objective
        if math.isfinite(previous) and objective > previous + DESCENT_TOL * (1.0 + abs(previous)):
            self.descent_violations += 1
            logger.warning(
                f"Objective rose at iteration {len(self.objective) + 1}: "
                f"{previous:.12g} -> {objective:.12g}"
            )

        self.objective.append(float(objective))
        self.delta_W.append(float(delta_W))
        self.delta_U.append(float(delta_U))
        self.subgradient_bound.append(float(subgradient_bound))
        self.breve_delta.append(float(breve_delta))
        self.wall_time.append(float(wall_time))
        self.degenerate.append(bool(degenerate))
        self.grad_inf_norm.append(float(grad_inf_norm))

    @property
    def final_objective(self) -> float:
        return self.objective[-1] if self.objective else self.initial_objective

    def to_frame(self, include_timing: bool = False) -> pd.DataFrame:
        """History as a DataFrame indexed by iteration (1-based)."""
        columns: Dict[str, Any] = {
            "objective": self.objective,
            "delta_W": self.delta_W,
            "delta_U": self.delta_U,
            "subgradient_bound": self.subgradient_bound,
            "breve_delta": self.breve_delta,
            "degenerate": self.degenerate,
            "grad_inf_norm": self.grad_inf_norm,
        }
        if include_timing:
            columns["wall_time"] = self.wall_time
        frame = pd.DataFrame(columns)
        frame.index = pd.RangeIndex(1, len(self) + 1, name="iteration")
        return frame


class StoppingRule:
    """Parameter tolerance or a run of stalled objective changes."""

    def __init__(self, tol_param: float, tol_obj: float, patience: int) -> None:
        self.tol_param = tol_param
        self.tol_obj = tol_obj
        self.patience = patience
        self._stalled = 0

    def check(self, delta: float, previous: float, current: float) -> Optional[str]:
        """Return the stop reason, or None to continue."""
        if delta <= self.tol_param:
            return "tol_param"
        relative = abs(previous - current) / max(1.0, abs(previous))
        self._stalled = self._stalled + 1 if relative < self.tol_obj else 0
        if self._stalled >= self.patience:
            return "tol_obj"
        return None


def resolve_step_constant(lipschitz: float, C: Optional[float], safety: float) -> float:
    """Step constant: explicit C (checked against the Lipschitz constant) or safety * rho.

    A zero Lipschitz constant (all-zero data) gives ``C = safety``.

    Raises:
        ValidationError: If an explicit C does not exceed the Lipschitz constant.
    """
    if C is None:
        return safety * lipschitz if lipschitz > 0 else safety
    if not C > lipschitz:
        raise ValidationError(
            f"Step constant C={C:.6g} must exceed the Lipschitz constant {lipschitz:.6g}"
        )
    return float(C)


def initial_U(
    W: np.ndarray, k: int, gap_tol: float
) -> Tuple[np.ndarray, Optional[SpectralSolution]]:
    """U-update at W, or ``k/N I`` when W is zero."""
    d, T = W.shape
    try:
        solution = u_update(build_laplacian(W), k, gap_tol)
    except DegenerateInputError:
        return (k / (d + T)) * np.eye(d + T), None
    return solution.U, solution


def graph_term(W: np.ndarray, U: np.ndarray, debug: bool = False) -> float:
    """``<L(W), U>`` through the distance form ``<D(U), |W|>``.

    With ``debug`` the trace form is evaluated too and must agree within
    1e-8 (1 + |value|).

    Raises:
        ValidationError: If the two forms disagree in debug mode.
    """
    d, T = W.shape
    value = float(np.sum(distance_matrix(U, d, T) * np.abs(W)))
    if debug:
        trace_form = float(np.sum(build_laplacian(W).matrix * U))
        if abs(trace_form - value) > TRACE_CHECK_TOL * (1.0 + abs(value)):
            raise ValidationError(
                f"Graph term mismatch: distance form {value:.12g}, trace form {trace_form:.12g}"
            )
    return value


def objective_P(
    W: np.ndarray, U: np.ndarray, data: MultiTaskDataset, loss: Loss, cfg: TFCLConfig
) -> float:
    """``J(W) + alpha1 <L(W), U> + alpha2/2 ||W||_F^2``."""
    W = as_task_matrix(W)
    value = loss.value(W, data)
    if cfg.alpha1 != 0:
        value += cfg.alpha1 * graph_term(W, U, cfg.debug)
    if cfg.alpha2 != 0:
        value += 0.5 * cfg.alpha2 * float(np.sum(W * W))
    return float(value)


def default_W0(data: MultiTaskDataset, seed: int = 0) -> np.ndarray:
    """Per-task ridge warm start ``(X^T X + 1e-3 I)^{-1} X^T y``.

    The warm start is a closed form, so every seed gives the same matrix;
    ``seed`` is accepted for a uniform solver signature.
    """
    del seed
    W0 = np.zeros((data.d, data.T))
    ridge = WARM_START_RIDGE * np.eye(data.d)
    for i, (x, v) in enumerate(zip(data.X, data.y)):
        if x.shape[0] == 0:
            continue
        W0[:, i] = np.linalg.solve(x.T @ x + ridge, x.T @ v)
    return W0


def fit(
    data: MultiTaskDataset,
    loss: Loss,
    cfg: Optional[TFCLConfig] = None,
    W0: Optional[np.ndarray] = None,
    callback: Optional[IterationCallback] = None,
) -> Tuple[np.ndarray, np.ndarray, FitHistory]:
    """Fit the base model by alternating U-updates and proximal W-steps.

    Args:
        data: Training data.
        loss: Loss implementation.
        cfg: Solver settings (defaults if None).
        W0: Starting weights; None uses :func:`default_W0`.
        callback: Called as ``callback(iteration, objective)``.

    Returns:
        tuple: (W, U, FitHistory).

    Raises:
        ValidationError: Invalid settings, k >= d + T, or C not above the
            Lipschitz constant.
        ConvergenceError: The objective became non-finite.
    """
    cfg = cfg or TFCLConfig()
    validate_tfcl_config(cfg)
    data.require_fit_ready()
    loss.prepare(data)

    d, T = data.d, data.T
    if cfg.k >= d + T:
        raise ValidationError(f"k={cfg.k} must be smaller than d + T = {d + T}")

    rho = loss.lipschitz(data, seed=cfg.seed)
    C = resolve_step_constant(rho, cfg.C, cfg.safety)
    weights = ProxWeights(alpha1=cfg.alpha1, alpha2=cfg.alpha2, C=C)

    if W0 is None:
        W = default_W0(data, cfg.seed)
    else:
        W = as_task_matrix(W0, "W0").copy()
        if W.shape != (d, T):
            raise ValidationError(f"W0 has shape {W.shape}, expected ({d}, {T})")

    U, _ = initial_U(W, cfg.k, cfg.gap_tol)
    history = FitHistory(lipschitz=rho, C=C)
    objective = objective_P(W, U, data, loss, cfg)
    if not math.isfinite(objective):
        raise ConvergenceError("Objective is not finite at the starting point", iteration=0)
    history.initial_objective = objective

    logger.info(
        f"Fitting base model: d={d}, T={T}, k={cfg.k}, loss={loss.name}, "
        f"lipschitz={rho:.6g}, C={C:.6g}"
    )

    subgradient_scale = C + rho + cfg.alpha1 * (math.sqrt(d) + math.sqrt(T) + 2.0)
    stopping = StoppingRule(cfg.tol_param, cfg.tol_obj, cfg.obj_patience)

    for t in range(1, cfg.max_iters + 1):
        start = time.perf_counter()

        laplacian = build_laplacian(W)
        solution: Optional[SpectralSolution] = None
        if laplacian.is_zero:
            U_new = U
            logger.warning(f"Iteration {t}: W is zero, keeping U unchanged")
        else:
            solution = u_update(laplacian, cfg.k, cfg.gap_tol)
            U_new = solution.U

        D = distance_matrix(U_new, d, T)
        G = loss.grad(W, data)
        W_new = w_prox(W - G / C, D, weights)

        objective_new = objective_P(W_new, U_new, data, loss, cfg)
        if not math.isfinite(objective_new):
            raise ConvergenceError(f"Objective became non-finite at iteration {t}", iteration=t)

        delta_W = float(np.linalg.norm(W_new - W))
        delta_U = float(np.linalg.norm(U_new - U))
        history.record(
            objective=objective_new,
            delta_W=delta_W,
            delta_U=delta_U,
            subgradient_bound=subgradient_scale * math.hypot(delta_W, delta_U),
            breve_delta=solution.breve_delta if solution else math.nan,
            wall_time=time.perf_counter() - start,
            degenerate=solution is None,
            grad_inf_norm=float(np.max(np.abs(G))),
        )
        if solution is not None and t <= cfg.record_embeddings:
            history.embeddings[t] = solution.eig.vectors[:, : cfg.k].copy()

        logger.debug(
            f"Iteration {t}: objective={objective_new:.10g}, dW={delta_W:.3e}, dU={delta_U:.3e}"
        )
        if callback is not None:
            callback(t, objective_new)

        reason = stopping.check(delta_W + delta_U, objective, objective_new)
        W, U, objective = W_new, U_new, objective_new
        if reason:
            history.converged = True
            history.stop_reason = reason
            break
    else:
        history.stop_reason = "max_iters"

    logger.info(
        f"Base fit finished after {len(history)} iterations ({history.stop_reason}), "
        f"objective={history.final_objective:.10g}"
    )
    return W, U, history
