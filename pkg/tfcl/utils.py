"""Utility functions module for tfcl.

Input validation for arrays, deterministic power iteration, canonical JSON
and hashing for provenance records, and the worker-thread cap.
"""

import hashlib
import json
import math
import os
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np

from tfcl.exceptions import ValidationError

THREADS_ENV_VAR = "TFCL_THREADS"


def as_finite_array(value: Any, name: str, ndim: Optional[int] = None) -> np.ndarray:
    """Convert ``value`` to a float64 array and check it is finite.

    Args:
        value: Array-like input.
        name: Name used in error messages.
        ndim: Required number of dimensions, if any.

    Returns:
        np.ndarray: A float64 array (a copy only when conversion needs one).

    Raises:
        ValidationError: If the input is not numeric, has the wrong number of
            dimensions or holds NaN/inf entries.
    """
    try:
        array = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name} must be numeric: {e}") from e

    if ndim is not None and array.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains non-finite entries")
    return array


def check_square(matrix: np.ndarray, name: str) -> int:
    """Return the order of a square matrix.

    Raises:
        ValidationError: If ``matrix`` is not square or is empty.
    """
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix, got {matrix.shape}")
    return matrix.shape[0]


def power_iteration(
    matvec: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: int = 0,
) -> float:
    """Largest eigenvalue of a symmetric positive semi-definite operator.

    The start vector is drawn from a seeded generator so repeated calls give
    the same estimate. Iteration stops when the Rayleigh quotient changes by
    less than ``tol`` relative to its value.

    Args:
        matvec: Function computing the operator times a vector.
        dim: Dimension of the operator.
        tol: Relative stopping tolerance.
        max_iter: Maximum number of iterations.
        seed: Seed of the start vector.

    Returns:
        float: Estimated largest eigenvalue (0.0 for the zero operator).
    """
    if dim < 1:
        return 0.0

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)

    estimate = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        rayleigh = float(v @ w)
        v = w / norm
        if abs(rayleigh - estimate) <= tol * abs(rayleigh):
            return rayleigh
        estimate = rayleigh

    return estimate


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, Path):
        return str(value)
    return value


def stable_json_dumps(data: Any) -> str:
    """Serialize ``data`` as indented JSON with sorted keys.

    Numpy scalars and arrays become plain numbers and lists; non-finite
    floats are written as the strings "inf", "-inf" and "nan".
    """
    return json.dumps(_to_jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(data: Any, path: Union[str, Path]) -> Path:
    """Write ``data`` with :func:`stable_json_dumps` as UTF-8."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(stable_json_dumps(data), encoding="utf-8")
    return path


def config_hash(data: Any) -> str:
    """SHA-256 hex digest of the canonical JSON form of ``data``."""
    canonical = json.dumps(_to_jsonable(data), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def resolve_threads(default: Optional[int] = None) -> int:
    """Number of worker threads allowed by ``TFCL_THREADS``.

    Args:
        default: Value used when the variable is unset; None means the CPU
            count.

    Returns:
        int: A positive thread count.

    Raises:
        ValidationError: If the variable is set to a non-positive integer or
            to something that is not an integer.
    """
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if not raw:
        return max(1, default if default is not None else (os.cpu_count() or 1))
    try:
        threads = int(raw)
    except ValueError as e:
        raise ValidationError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from e
    if threads < 1:
        raise ValidationError(f"{THREADS_ENV_VAR} must be at least 1, got {threads}")
    return threads
