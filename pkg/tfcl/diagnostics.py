"""Structure recovery scores, grouping certificates and convergence reports."""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from sklearn.metrics import rand_score

from tfcl.bipartite import connected_components, default_threshold
from tfcl.config import QConfig, TFCLConfig
from tfcl.data import GroundTruth
from tfcl.exceptions import ValidationError
from tfcl.losses import MultiTaskDataset
from tfcl.solver import DESCENT_TOL, FitHistory
from tfcl.spectral import EigenSystem
from tfcl.utils import as_finite_array

EMPTY_PREDICTION_CONVENTION = "precision is 1.0 when no entry is predicted"
SPECTRAL_ZERO_TOL = 1e-10
CERTIFICATE_GAP_FLOOR = 1e-8


@dataclass
class RecoveryReport:
    """Support and grouping agreement with the ground truth.

    Attributes:
        precision: Fraction of predicted support entries that are true.
        recall: Fraction of true support entries that are predicted.
        f1: Harmonic mean of precision and recall (0 when both are 0).
        component_count: Connected components of the recovered graph.
        rand_index: Rand index of recovered vs. true node groupings.
        threshold: Support threshold used.
        predicted_support: Number of predicted nonzeros.
        true_support: Number of true nonzeros.
        convention: How the empty prediction is scored.
    """

    precision: float
    recall: float
    f1: float
    component_count: int
    rand_index: float
    threshold: float
    predicted_support: int
    true_support: int
    convention: str = EMPTY_PREDICTION_CONVENTION

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def recovery_report(
    W: np.ndarray, gt: GroundTruth, threshold: Optional[float] = None
) -> RecoveryReport:
    """Compare the support and grouping of W with the ground truth.

    Args:
        W: Recovered d x T weights.
        gt: Ground truth of the same shape.
        threshold: Support cutoff; None uses ``1e-8 * max|W|``.

    Raises:
        ValidationError: On a shape mismatch or negative threshold.
    """
    W = as_finite_array(W, "W", ndim=2)
    if W.shape != gt.W_star.shape:
        raise ValidationError(f"W has shape {W.shape}, ground truth {gt.W_star.shape}")
    if threshold is None:
        threshold = default_threshold(W)
    if threshold < 0:
        raise ValidationError(f"threshold must be >= 0, got {threshold}")

    predicted = np.abs(W) > threshold
    truth = gt.W_star != 0
    true_positive = int(np.sum(predicted & truth))
    n_predicted, n_true = int(predicted.sum()), int(truth.sum())

    precision = true_positive / n_predicted if n_predicted else 1.0
    recall = true_positive / n_true if n_true else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    recovered = connected_components(W, threshold)
    reference = connected_components(gt.W_star, 0.0)
    return RecoveryReport(
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        component_count=recovered.count,
        rand_index=float(rand_score(reference.labels, recovered.labels)),
        threshold=float(threshold),
        predicted_support=n_predicted,
        true_support=n_true,
    )


@dataclass
class GroupingCertificate:
    """Quantities of the a-posteriori grouping guarantee.

    Booleans are plain evaluations of the inequalities; they may be False
    for a run that nevertheless recovered the groups.

    Attributes:
        epsilon_T: Final recorded objective.
        C0: ``sqrt(2 epsilon_T / ridge weight)``.
        kappa0: ``C0 + varpi / C``.
        delta1: ``C kappa0 / alpha1``.
        delta2: ``C delta0 / alpha1`` when delta0 is given.
        beta: ``1/n1 + 1/n2`` for the two largest true groups.
        xi: ``rho (sqrt(N) + sqrt(2))``.
        rho: ``C0 / lambda_{k+1}``.
        lambda_k: k-th smallest eigenvalue of the final Laplacian.
        lambda_k1: (k+1)-th smallest eigenvalue.
        varpi: Gradient max-norm bound used in kappa0.
        spectral_condition: The eigengap requirement on lambda_k, lambda_k1.
        no_false_positive_condition: Conditions for no false grouping.
        correct_grouping_condition: Conditions for exact grouping.
        applicable: False when lambda_{k+1} is numerically zero.
        empirical: True when varpi is the largest observed gradient max-norm.
        note: Free-text explanation.
    """

    epsilon_T: float
    C0: float
    kappa0: float
    delta1: float
    delta2: Optional[float]
    beta: float
    xi: float
    rho: float
    lambda_k: float
    lambda_k1: float
    varpi: float
    spectral_condition: bool
    no_false_positive_condition: bool
    correct_grouping_condition: bool
    applicable: bool
    empirical: bool
    note: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def personalized_gradient_bound(
    data: MultiTaskDataset, epsilon: float, cfg: QConfig, C0: float
) -> float:
    """Bound on the theta_g gradient norm over the sublevel ball of the run.

    ``sum_i 2 n_i t_i / (sqrt(n+_i) n-_i) ((xi_c + xi_g + xi_p) t_i / sqrt(n+_i) + 1)``
    with ``t_i = ||X_i||_2``. The factor 2 matches the pairwise AUC loss.
    """
    data.require_both_classes()
    xi_c = math.sqrt(2.0 * epsilon / cfg.lam_c) if cfg.lam_c > 0 else math.inf
    xi_p = epsilon / cfg.lam_p if cfg.lam_p > 0 else math.inf
    radius = xi_c + C0 + xi_p
    total = 0.0
    for i in range(data.T):
        theta = float(np.linalg.norm(data.X[i], 2))
        n, n_pos, n_neg = float(data.n[i]), float(data.n_pos[i]), float(data.n_neg[i])
        scale = 2.0 * n * theta / (math.sqrt(n_pos) * n_neg)
        total += scale * (radius * theta / math.sqrt(n_pos) + 1.0)
    return total


def _weights(cfg: Union[TFCLConfig, QConfig]) -> Dict[str, float]:
    if isinstance(cfg, QConfig):
        return {"graph": cfg.lam_graph, "ridge": cfg.lam_g}
    return {"graph": cfg.alpha1, "ridge": cfg.alpha2}


def grouping_certificate(
    history: FitHistory,
    spectrum: Union[EigenSystem, Sequence[float], np.ndarray],
    cfg: Union[TFCLConfig, QConfig],
    group_sizes: Sequence[int],
    delta0: Optional[float] = None,
    data: Optional[MultiTaskDataset] = None,
) -> GroupingCertificate:
    """Evaluate the grouping guarantee at the end of a fit.

    Args:
        history: History of the finished fit.
        spectrum: Eigenvalues (ascending) of the final Laplacian.
        cfg: Settings of the fit (base or personalized).
        group_sizes: Node counts of the true groups.
        delta0: Lower bound on the pre-prox magnitudes, if known.
        data: Training data; for personalized fits it enables the
            data-dependent gradient bound instead of the observed one.

    Raises:
        ValidationError: If k >= N (no lambda_{k+1}) or inputs are empty.
    """
    values = np.asarray(spectrum.values if isinstance(spectrum, EigenSystem) else spectrum, float)
    k, N = cfg.k, values.size
    if k >= N:
        raise ValidationError(f"Spectrum of size {N} has no eigenvalue {k + 1}")
    if not group_sizes:
        raise ValidationError("group_sizes cannot be empty")
    if not history.objective and not math.isfinite(history.initial_objective):
        raise ValidationError("History is empty")

    weights = _weights(cfg)
    C = history.C
    epsilon = max(history.final_objective, 0.0)
    C0 = math.sqrt(2.0 * epsilon / weights["ridge"]) if weights["ridge"] > 0 else math.inf

    empirical = not (isinstance(cfg, QConfig) and data is not None)
    if empirical:
        varpi = max(history.grad_inf_norm) if history.grad_inf_norm else 0.0
    else:
        varpi = personalized_gradient_bound(data, epsilon, cfg, C0)  # type: ignore[arg-type]
    kappa0 = C0 + varpi / C

    alpha1 = weights["graph"]
    delta1 = C * kappa0 / alpha1 if alpha1 > 0 else math.inf
    delta2 = C * delta0 / alpha1 if delta0 is not None and alpha1 > 0 else None

    sizes = sorted(group_sizes, reverse=True)
    n1 = sizes[0]
    n2 = sizes[1] if len(sizes) > 1 else sizes[0]
    beta = 1.0 / n1 + 1.0 / n2

    lambda_k, lambda_k1 = float(values[k - 1]), float(values[k])
    scale = max(1.0, float(np.max(np.abs(values))))
    applicable = lambda_k1 > SPECTRAL_ZERO_TOL * scale
    note = "varpi is the largest observed gradient max-norm" if empirical else "varpi from data"

    if not applicable:
        return GroupingCertificate(
            epsilon_T=epsilon, C0=C0, kappa0=kappa0, delta1=delta1, delta2=delta2, beta=beta,
            xi=math.inf, rho=math.inf, lambda_k=lambda_k, lambda_k1=lambda_k1, varpi=varpi,
            spectral_condition=False, no_false_positive_condition=False,
            correct_grouping_condition=False, applicable=False, empirical=empirical,
            note="not applicable: lambda_{k+1} is numerically zero",
        )  # fmt: skip

    rho = C0 / lambda_k1
    xi = rho * (math.sqrt(N) + math.sqrt(2.0))
    margin = 8.0 * math.sqrt(2.0) * xi

    lower_ok = lambda_k >= 0 if isinstance(cfg, QConfig) else lambda_k > 0
    spectral_condition = bool(lambda_k1 > lambda_k and lower_ok)
    no_false_positive = bool(
        spectral_condition
        and math.sqrt(2.0) / 32.0 * beta > xi
        and margin < delta1 < beta - margin
    )
    correct_grouping = bool(
        no_false_positive
        and delta2 is not None
        and margin < min(delta1, delta2)
        and max(delta1, delta2) < beta - margin
    )

    return GroupingCertificate(
        epsilon_T=epsilon,
        C0=C0,
        kappa0=kappa0,
        delta1=delta1,
        delta2=delta2,
        beta=beta,
        xi=xi,
        rho=rho,
        lambda_k=lambda_k,
        lambda_k1=lambda_k1,
        varpi=varpi,
        spectral_condition=spectral_condition,
        no_false_positive_condition=no_false_positive,
        correct_grouping_condition=correct_grouping,
        applicable=True,
        empirical=empirical,
        note=note,
    )


@dataclass
class ConvergenceReport:
    """Summary of a fit history.

    Attributes:
        iterations: Recorded iterations.
        converged: Whether a tolerance stopped the run.
        stop_reason: Why the run stopped.
        initial_objective: Objective at the start.
        final_objective: Objective at the end.
        descent_violations: Steps that raised the objective beyond tolerance.
        degenerate_iterations: Iterations with a zero graph.
        last_delta_W: Last parameter change.
        last_delta_U: Last U change.
        min_breve_delta: Smallest eigengap over non-degenerate iterations.
        certificate_applicable: False when the eigengap collapsed.
        running_mean_sq_subgradient: ``(1/t) sum_{s<=t} g_s^2`` per t.
        envelope_a: Coefficient a of the least-squares fit ``a/t + b``.
        envelope_b: Offset b of that fit.
        rate_trend_ok: Running mean at the end is at most half its value at
            the quarter-way iteration.
        stagnation: Objective never moved while parameters kept changing
            or no tolerance was met.
    """

    iterations: int
    converged: bool
    stop_reason: str
    initial_objective: float
    final_objective: float
    descent_violations: int
    degenerate_iterations: int
    last_delta_W: float
    last_delta_U: float
    min_breve_delta: float
    certificate_applicable: bool
    running_mean_sq_subgradient: List[float] = field(default_factory=list)
    envelope_a: float = math.nan
    envelope_b: float = math.nan
    rate_trend_ok: bool = True
    stagnation: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def count_descent_violations(objectives: Sequence[float], initial: float = math.nan) -> int:
    """Steps where the objective rose by more than 1e-9 (1 + |previous|)."""
    sequence = ([initial] if math.isfinite(initial) else []) + list(objectives)
    return sum(
        1
        for previous, current in zip(sequence, sequence[1:])
        if current > previous + DESCENT_TOL * (1.0 + abs(previous))
    )


def convergence_report(history: FitHistory) -> ConvergenceReport:
    """Assemble descent, eigengap and subgradient-rate diagnostics."""
    T = len(history)
    squared = np.asarray(history.subgradient_bound, float) ** 2
    running = np.cumsum(squared) / np.arange(1, T + 1) if T else np.array([])

    envelope_a = envelope_b = math.nan
    if T >= 2:
        t = np.arange(1, T + 1, dtype=float)
        design = np.column_stack([1.0 / t, np.ones(T)])
        (envelope_a, envelope_b), *_ = np.linalg.lstsq(design, running, rcond=None)

    quarter = max(T // 4, 1) - 1
    rate_trend_ok = bool(T < 4 or running[-1] <= 0.5 * running[quarter] * (1.0 + 1e-12))

    gaps = np.asarray(history.breve_delta, float)
    gaps = gaps[~np.isnan(gaps)]
    min_gap = float(np.min(gaps)) if gaps.size else math.nan
    certificate_applicable = bool(gaps.size and min_gap > CERTIFICATE_GAP_FLOOR)

    objectives = np.asarray(history.objective, float)
    stagnation = False
    if T >= 2:
        reference = objectives[0]
        flat = np.max(np.abs(objectives - reference)) <= 1e-12 * (1.0 + abs(reference))
        moving = history.delta_W[-1] + history.delta_U[-1] > 0
        stagnation = bool(flat and (moving or not history.converged))

    return ConvergenceReport(
        iterations=T,
        converged=history.converged,
        stop_reason=history.stop_reason,
        initial_objective=history.initial_objective,
        final_objective=history.final_objective,
        descent_violations=count_descent_violations(history.objective, history.initial_objective),
        degenerate_iterations=int(sum(history.degenerate)),
        last_delta_W=history.delta_W[-1] if T else math.nan,
        last_delta_U=history.delta_U[-1] if T else math.nan,
        min_breve_delta=min_gap,
        certificate_applicable=certificate_applicable,
        running_mean_sq_subgradient=running.tolist(),
        envelope_a=float(envelope_a),
        envelope_b=float(envelope_b),
        rate_trend_ok=rate_trend_ok,
        stagnation=stagnation,
    )
