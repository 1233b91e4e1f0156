"""Tests for the base alternating solver."""

import math

import numpy as np
import pytest

from tfcl.bipartite import build_laplacian, connected_components
from tfcl.config import TFCLConfig
from tfcl.exceptions import ValidationError
from tfcl.losses import MultiTaskDataset, SquaredLoss, make_loss
from tfcl.solver import (
    FitHistory,
    StoppingRule,
    default_W0,
    fit,
    graph_term,
    initial_U,
    objective_P,
    resolve_step_constant,
)
from tfcl.spectral import truncated_eig_sum, u_update


def ridge_problem(rng, T=2, n=12, d=3):
    X = tuple(rng.standard_normal((n, d)) for _ in range(T))
    y = tuple(rng.standard_normal(n) for _ in range(T))
    return MultiTaskDataset(X=X, y=y)


class TestObjective:
    """Test cases for objective_P and graph_term."""

    def test_zero_weights(self, block_data, rng):
        """Test that W = 0 leaves only the loss at 0."""
        data, _ = block_data
        U = rng.standard_normal((21, 21))
        U = U @ U.T
        loss = SquaredLoss()
        W = np.zeros((data.d, data.T))

        value = objective_P(W, U, data, loss, TFCLConfig(alpha1=3.0, alpha2=2.0))

        assert value == pytest.approx(loss.value(W, data))

    def test_unregularized(self, block_data, rng):
        """Test that alpha1 = alpha2 = 0 gives the loss alone."""
        data, _ = block_data
        loss = SquaredLoss()
        W = rng.standard_normal((data.d, data.T))

        value = objective_P(W, np.eye(21), data, loss, TFCLConfig(alpha1=0.0, alpha2=0.0))

        assert value == pytest.approx(loss.value(W, data))

    def test_trace_form_at_u_update(self, block_data, rng):
        """Test J + alpha1 (sum of k smallest eigenvalues) + ridge at the U-update."""
        data, _ = block_data
        loss = SquaredLoss()
        W = rng.standard_normal((data.d, data.T))
        cfg = TFCLConfig(k=3, alpha1=0.7, alpha2=0.2, debug=True)
        laplacian = build_laplacian(W)
        U = u_update(laplacian, 3).U

        expected = (
            loss.value(W, data)
            + 0.7 * truncated_eig_sum(laplacian, 3)
            + 0.1 * float(np.sum(W * W))
        )
        assert objective_P(W, U, data, loss, cfg) == pytest.approx(expected, rel=1e-10)

    def test_graph_term_debug_mismatch(self):
        """Test that the debug cross-check catches an inconsistent U."""
        W = np.array([[1.0, 2.0]])
        U = np.zeros((3, 3))
        U[0, 1] = 1.0

        with pytest.raises(ValidationError, match="mismatch"):
            graph_term(W, U, debug=True)


class TestStepConstant:
    """Test cases for resolve_step_constant."""

    def test_safety_multiple(self):
        """Test C = safety * lipschitz when C is not given."""
        assert resolve_step_constant(10.0, None, 1.5) == pytest.approx(15.0)

    def test_zero_lipschitz(self):
        """Test that all-zero data falls back to C = safety."""
        assert resolve_step_constant(0.0, None, 1.01) == pytest.approx(1.01)

    def test_explicit_constant(self):
        """Test that an explicit C above the Lipschitz constant is kept."""
        assert resolve_step_constant(10.0, 12.0, 1.01) == 12.0

    @pytest.mark.parametrize("C", [10.0, 5.0])
    def test_explicit_constant_too_small(self, C):
        """Test that C <= lipschitz raises ValidationError."""
        with pytest.raises(ValidationError, match="must exceed"):
            resolve_step_constant(10.0, C, 1.01)


class TestStoppingRule:
    """Test cases for StoppingRule."""

    def test_parameter_tolerance(self):
        """Test that a small step stops immediately."""
        assert StoppingRule(1e-6, 1e-8, 3).check(1e-7, 1.0, 0.5) == "tol_param"

    def test_objective_patience(self):
        """Test that the objective must stall for `patience` iterations."""
        rule = StoppingRule(1e-12, 1e-8, 3)

        assert rule.check(1.0, 1.0, 1.0) is None
        assert rule.check(1.0, 1.0, 1.0) is None
        assert rule.check(1.0, 1.0, 1.0) == "tol_obj"

    def test_progress_resets_patience(self):
        """Test that a real decrease resets the stall counter."""
        rule = StoppingRule(1e-12, 1e-8, 2)

        assert rule.check(1.0, 1.0, 1.0) is None
        assert rule.check(1.0, 1.0, 0.5) is None
        assert rule.check(1.0, 0.5, 0.5) is None
        assert rule.check(1.0, 0.5, 0.5) == "tol_obj"


class TestFitHistory:
    """Test cases for FitHistory."""

    def record(self, history, objective):
        history.record(objective, 0.1, 0.1, 1.0, 0.5, 0.01, False, 1.0)

    def test_counts_descent_violations(self):
        """Test that only rises beyond 1e-9 (1 + |previous|) count."""
        history = FitHistory(initial_objective=10.0)
        for value in (9.0, 9.0 + 1e-12, 9.5, 8.0):
            self.record(history, value)

        assert history.descent_violations == 1
        assert history.final_objective == 8.0
        assert len(history) == 4

    def test_frame_excludes_timing(self):
        """Test that wall time is only in the frame on request."""
        history = FitHistory(initial_objective=1.0)
        self.record(history, 0.5)

        frame = history.to_frame()

        assert "wall_time" not in frame.columns
        assert frame.index.name == "iteration"
        assert list(frame.index) == [1]
        assert "wall_time" in history.to_frame(include_timing=True).columns

    def test_empty_history_final_objective(self):
        """Test that an empty history reports the initial objective."""
        assert FitHistory(initial_objective=3.0).final_objective == 3.0


class TestWarmStart:
    """Test cases for default_W0 and initial_U."""

    def test_deterministic(self, block_data):
        """Test that the warm start does not depend on the seed."""
        data, _ = block_data

        np.testing.assert_array_equal(default_W0(data, 0), default_W0(data, 7))

    def test_zero_data(self):
        """Test that zero data gives a zero warm start."""
        data = MultiTaskDataset(X=(np.zeros((4, 2)),), y=(np.zeros(4),))

        np.testing.assert_array_equal(default_W0(data), 0.0)

    def test_normal_equations(self):
        """Test a single well-conditioned square task."""
        X = np.diag([10.0, 20.0, 30.0])
        y = np.array([1.0, -2.0, 3.0])
        data = MultiTaskDataset(X=(X,), y=(y,))

        np.testing.assert_allclose(default_W0(data)[:, 0], np.linalg.solve(X, y), rtol=1e-4)

    def test_initial_U_for_zero_weights(self):
        """Test that W = 0 starts from k/N I."""
        U, solution = initial_U(np.zeros((2, 3)), 2, 1e-8)

        assert solution is None
        np.testing.assert_allclose(U, 0.4 * np.eye(5))


class TestFit:
    """Test cases for fit."""

    def test_ridge_oracle(self, rng):
        """Test that alpha1 = 0 converges to per-task ridge regression."""
        data = ridge_problem(rng)
        cfg = TFCLConfig(
            k=1, alpha1=0.0, alpha2=0.5, tol_param=1e-11, tol_obj=1e-16, max_iters=5000
        )

        W, _, history = fit(data, SquaredLoss(), cfg)

        for i, (X, y) in enumerate(zip(data.X, data.y)):
            expected = np.linalg.solve(X.T @ X + 0.5 * np.eye(3), X.T @ y)
            np.testing.assert_allclose(W[:, i], expected, atol=1e-5)
        assert history.converged
        assert history.descent_violations == 0

    def test_objective_non_increasing(self, block_data):
        """Test monotone descent with the default step constant."""
        data, _ = block_data
        cfg = TFCLConfig(k=3, alpha1=1.0, alpha2=0.01, max_iters=60)

        _, _, history = fit(data, SquaredLoss(), cfg)

        objectives = [history.initial_objective] + history.objective
        for previous, current in zip(objectives, objectives[1:]):
            assert current <= previous + 1e-9 * (1.0 + abs(previous))
        assert history.descent_violations == 0

    def test_start_at_ground_truth(self, block_data):
        """Test that W0 = W* keeps descending and keeps the block support."""
        data, gt = block_data
        cfg = TFCLConfig(k=3, alpha1=1.0, alpha2=1e-3, max_iters=50)

        W, _, history = fit(data, SquaredLoss(), cfg, W0=gt.W_star)

        assert history.descent_violations == 0
        np.testing.assert_array_equal(W != 0, gt.W_star != 0)
        assert connected_components(W, 0.0).count == 3

    def test_history_lengths(self, block_data):
        """Test that every per-iteration list has one entry per iteration."""
        data, _ = block_data

        _, _, history = fit(data, SquaredLoss(), TFCLConfig(k=3, max_iters=7, record_embeddings=2))

        lengths = {
            len(history.objective),
            len(history.delta_W),
            len(history.delta_U),
            len(history.subgradient_bound),
            len(history.breve_delta),
            len(history.wall_time),
            len(history.degenerate),
            len(history.grad_inf_norm),
        }
        assert lengths == {len(history)}
        assert sorted(history.embeddings) == [1, 2]
        assert history.embeddings[1].shape == (21, 3)
        assert history.C == pytest.approx(1.01 * history.lipschitz)

    def test_callback_called_every_iteration(self, block_data):
        """Test the iteration callback."""
        data, _ = block_data
        calls = []

        _, _, history = fit(
            data,
            SquaredLoss(),
            TFCLConfig(k=3, max_iters=5),
            callback=lambda t, objective: calls.append((t, objective)),
        )

        assert [t for t, _ in calls] == list(range(1, len(history) + 1))
        assert calls[-1][1] == history.final_objective

    def test_max_iters_stop_reason(self, block_data):
        """Test that an exhausted budget is reported as not converged."""
        data, _ = block_data

        _, _, history = fit(data, SquaredLoss(), TFCLConfig(k=3, max_iters=2, tol_param=1e-300))

        assert history.stop_reason == "max_iters"
        assert not history.converged
        assert len(history) == 2

    def test_zero_data_is_degenerate(self):
        """Test that an all-zero problem freezes U and stops at once."""
        data = MultiTaskDataset(
            X=(np.zeros((3, 2)), np.zeros((3, 2))), y=(np.zeros(3), np.zeros(3))
        )

        W, U, history = fit(data, SquaredLoss(), TFCLConfig(k=1))

        np.testing.assert_array_equal(W, 0.0)
        np.testing.assert_allclose(U, 0.25 * np.eye(4))
        assert history.degenerate == [True]
        assert math.isnan(history.breve_delta[0])
        assert history.stop_reason == "tol_param"
        assert history.C == pytest.approx(1.01)

    def test_k_too_large(self, block_data):
        """Test that k must be below d + T."""
        data, _ = block_data

        with pytest.raises(ValidationError, match="smaller than"):
            fit(data, SquaredLoss(), TFCLConfig(k=21))

    def test_explicit_step_constant_checked(self, block_data):
        """Test that an explicit C below the Lipschitz constant is rejected."""
        data, _ = block_data

        with pytest.raises(ValidationError, match="must exceed"):
            fit(data, SquaredLoss(), TFCLConfig(k=3, C=1.0))

    def test_wrong_start_shape(self, block_data):
        """Test that W0 must be d x T."""
        data, _ = block_data

        with pytest.raises(ValidationError, match="W0"):
            fit(data, SquaredLoss(), TFCLConfig(k=3), W0=np.zeros((2, 2)))

    def test_auc_loss(self, auc_data):
        """Test a fit with the pairwise AUC loss."""
        W, U, history = fit(auc_data, make_loss("auc"), TFCLConfig(k=2, max_iters=30))

        assert W.shape == (4, 3)
        assert U.shape == (7, 7)
        assert history.descent_violations == 0

    def test_reproducible(self, block_data):
        """Test that two runs with the same settings are identical."""
        data, _ = block_data
        cfg = TFCLConfig(k=3, max_iters=10)

        W1, U1, h1 = fit(data, SquaredLoss(), cfg)
        W2, U2, h2 = fit(data, SquaredLoss(), cfg)

        np.testing.assert_array_equal(W1, W2)
        np.testing.assert_array_equal(U1, U2)
        assert h1.objective == h2.objective
