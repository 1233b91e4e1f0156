"""Closed-form proximal operators.

- :func:`w_prox`: distance-weighted elastic net used for the weight update.
- :func:`l2_prox`: ridge shrink used for the consensus vector.
- :func:`column_group_prox`: column-wise group shrink used for the
  personal component; whole columns become exactly zero.
"""

from dataclasses import dataclass

import numpy as np

from tfcl.exceptions import ValidationError
from tfcl.utils import as_finite_array

NEGATIVE_DISTANCE_TOL = 1e-10


@dataclass(frozen=True)
class ProxWeights:
    """Weights of the weight-update subproblem.

    Attributes:
        alpha1: Weight of the distance-weighted l1 term (>= 0).
        alpha2: Weight of the squared Frobenius term (>= 0).
        C: Step constant (> 0).
    """

    alpha1: float
    alpha2: float
    C: float

    def __post_init__(self) -> None:
        if not self.C > 0:
            raise ValidationError(f"C must be positive, got {self.C}")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValidationError("alpha1 and alpha2 cannot be negative")

    @property
    def shrink(self) -> float:
        """Multiplicative ridge factor ``1 / (1 + alpha2 / C)``."""
        return 1.0 / (1.0 + self.alpha2 / self.C)

    @property
    def threshold_scale(self) -> float:
        """Per-unit-distance threshold ``alpha1 / (C + alpha2)``."""
        return self.alpha1 / (self.C + self.alpha2)


def w_prox(W_tilde: np.ndarray, D: np.ndarray, w: ProxWeights) -> np.ndarray:
    """Minimizer of ``C/2 ||W - W~||^2 + alpha1 <D, |W|> + alpha2/2 ||W||^2``.

    Elementwise ``sgn(W~) (|W~| / (1 + alpha2/C) - alpha1/(C + alpha2) D)_+``.
    Entries exactly at the threshold become 0.

    Raises:
        ValidationError: On shape mismatch or a D entry below -1e-10.
    """
    W_tilde = as_finite_array(W_tilde, "W_tilde", ndim=2)
    D = as_finite_array(D, "D", ndim=2)
    if W_tilde.shape != D.shape:
        raise ValidationError(f"W_tilde {W_tilde.shape} and D {D.shape} differ in shape")
    if np.any(D < -NEGATIVE_DISTANCE_TOL):
        raise ValidationError("Distance matrix has negative entries")

    magnitude = np.abs(W_tilde) * w.shrink - w.threshold_scale * np.maximum(D, 0.0)
    return np.sign(W_tilde) * np.maximum(magnitude, 0.0)


def l2_prox(v: np.ndarray, lam: float) -> np.ndarray:
    """Minimizer of ``1/2 ||x - v||^2 + lam/2 ||x||^2``, i.e. ``v / (1 + lam)``."""
    if lam < 0:
        raise ValidationError(f"lam must be >= 0, got {lam}")
    return as_finite_array(v, "v") / (1.0 + lam)


def column_group_prox(M: np.ndarray, lam: float) -> np.ndarray:
    """Column-wise group shrink ``max(0, 1 - lam / ||M_j||) M_j``.

    Columns with norm at most ``lam`` (including zero columns) become zero.
    """
    if lam < 0:
        raise ValidationError(f"lam must be >= 0, got {lam}")
    M = as_finite_array(M, "M", ndim=2)
    norms = np.linalg.norm(M, axis=0)
    scale = np.zeros_like(norms)
    keep = norms > lam
    scale[keep] = 1.0 - lam / norms[keep]
    return M * scale[None, :]
