"""Tests for the utils module."""

import json

import numpy as np
import pytest

from tfcl.exceptions import ValidationError
from tfcl.utils import (
    THREADS_ENV_VAR,
    as_finite_array,
    check_square,
    config_hash,
    power_iteration,
    resolve_threads,
    stable_json_dumps,
    write_json,
)


class TestAsFiniteArray:
    """Test cases for as_finite_array."""

    def test_converts_lists(self):
        """Test conversion of nested lists to float64."""
        array = as_finite_array([[1, 2], [3, 4]], "A", ndim=2)

        assert array.dtype == np.float64
        assert array.shape == (2, 2)

    def test_wrong_ndim(self):
        """Test the dimension check."""
        with pytest.raises(ValidationError, match="2-dimensional"):
            as_finite_array([1.0, 2.0], "A", ndim=2)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite(self, bad):
        """Test that NaN and inf entries are rejected."""
        with pytest.raises(ValidationError, match="non-finite"):
            as_finite_array([1.0, bad], "v")

    def test_non_numeric(self):
        """Test that strings are rejected."""
        with pytest.raises(ValidationError, match="numeric"):
            as_finite_array(["a", "b"], "v")


class TestCheckSquare:
    """Test cases for check_square."""

    def test_square(self):
        """Test the returned order."""
        assert check_square(np.zeros((3, 3)), "M") == 3

    @pytest.mark.parametrize("shape", [(2, 3), (0, 0), (4,)])
    def test_not_square(self, shape):
        """Test rectangular, empty and 1-D inputs."""
        with pytest.raises(ValidationError, match="square"):
            check_square(np.zeros(shape), "M")


class TestPowerIteration:
    """Test cases for power_iteration."""

    def test_diagonal_operator(self):
        """Test the largest eigenvalue of a diagonal matrix."""
        A = np.diag([1.0, 4.0, 2.0])

        assert power_iteration(lambda v: A @ v, 3, tol=1e-12) == pytest.approx(4.0, rel=1e-6)

    def test_matches_eigensolver(self, rng):
        """Test a random Gram matrix against numpy."""
        B = rng.standard_normal((10, 6))
        A = B.T @ B

        estimate = power_iteration(lambda v: A @ v, 6, tol=1e-12, max_iter=5000)

        assert estimate == pytest.approx(np.linalg.eigvalsh(A)[-1], rel=1e-6)

    def test_zero_operator(self):
        """Test that the zero operator gives 0."""
        assert power_iteration(lambda v: 0.0 * v, 4) == 0.0

    def test_empty_dimension(self):
        """Test dim < 1."""
        assert power_iteration(lambda v: v, 0) == 0.0

    def test_deterministic(self, rng):
        """Test that the seeded start vector makes repeated calls identical."""
        B = rng.standard_normal((8, 5))
        A = B.T @ B

        first = power_iteration(lambda v: A @ v, 5, max_iter=3, seed=7)
        second = power_iteration(lambda v: A @ v, 5, max_iter=3, seed=7)

        assert first == second


class TestJson:
    """Test cases for stable_json_dumps, write_json and config_hash."""

    def test_sorted_and_numpy_aware(self):
        """Test key order and numpy conversion."""
        text = stable_json_dumps({"b": np.float64(1.5), "a": np.arange(3), "c": np.bool_(True)})

        assert json.loads(text) == {"a": [0, 1, 2], "b": 1.5, "c": True}
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_non_finite_as_strings(self):
        """Test that inf and nan become strings."""
        data = json.loads(stable_json_dumps({"x": float("inf"), "y": -np.inf, "z": np.nan}))

        assert data == {"x": "inf", "y": "-inf", "z": "nan"}

    def test_write_json(self, temp_dir):
        """Test that write_json creates parent directories."""
        path = write_json({"a": 1}, temp_dir / "nested" / "out.json")

        assert json.loads(path.read_text(encoding="utf-8")) == {"a": 1}

    def test_config_hash_ignores_key_order(self):
        """Test that the digest depends on content only."""
        assert config_hash({"a": 1, "b": [1.0, 2.0]}) == config_hash({"b": [1.0, 2.0], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})
        assert len(config_hash({})) == 64


class TestResolveThreads:
    """Test cases for resolve_threads."""

    def test_unset_uses_default(self, monkeypatch):
        """Test the fallback when the variable is unset."""
        monkeypatch.delenv(THREADS_ENV_VAR, raising=False)

        assert resolve_threads(3) == 3
        assert resolve_threads() >= 1

    def test_from_environment(self, monkeypatch):
        """Test that the variable overrides the default."""
        monkeypatch.setenv(THREADS_ENV_VAR, "2")

        assert resolve_threads(8) == 2

    @pytest.mark.parametrize("raw", ["0", "-1", "many"])
    def test_invalid_values(self, monkeypatch, raw):
        """Test that non-positive and non-integer values are rejected."""
        monkeypatch.setenv(THREADS_ENV_VAR, raw)

        with pytest.raises(ValidationError, match=THREADS_ENV_VAR):
            resolve_threads()
