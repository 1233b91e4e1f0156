"""Tests for the progress module."""

import io

from rich.console import Console

from tfcl.progress import ProgressManager, create_progress_manager


def recording_manager():
    """Enabled manager that draws into a string buffer."""
    buffer = io.StringIO()
    console = Console(file=buffer, force_terminal=False, width=120)
    return ProgressManager(enabled=True, console=console), buffer


class TestProgressManager:
    """Tests for the ProgressManager class."""

    def test_manager_initialization(self):
        """Test initializing the manager."""
        manager = ProgressManager(enabled=True)

        assert manager.enabled is True
        assert manager._progress is None
        assert manager._task_ids == {}

    def test_disabled_manager_is_a_no_op(self):
        """Test that every method is safe and silent when disabled."""
        manager = ProgressManager(enabled=False)

        assert manager.create_progress_bar("Test") is None
        assert manager.start_fit(10) is None
        manager.fit_callback()(1, 2.0)
        manager.complete_fit("max_iters")
        assert manager.start_grid(4) is None
        manager.update_grid_progress(1, 4)
        manager.complete_grid()
        assert manager.start_benchmark(3) is None
        manager.update_benchmark_progress(1, 3)
        manager.complete_benchmark()
        manager.print_status("hidden")

        assert manager._progress is None

    def test_fit_bar_lifecycle(self):
        """Test that the fit bar starts, advances and stops."""
        manager, _ = recording_manager()

        task_id = manager.start_fit(5)
        callback = manager.fit_callback()
        callback(1, 3.5)
        callback(2, 3.0)

        assert task_id is not None
        assert manager._progress.tasks[0].completed == 2
        manager.complete_fit("tol_param")
        assert manager._progress is None

    def test_budget_warning(self):
        """Test that running out of iterations is reported."""
        manager, buffer = recording_manager()

        manager.start_fit(2)
        manager.complete_fit("max_iters")

        assert "iteration budget exhausted" in buffer.getvalue()

    def test_no_warning_on_convergence(self):
        """Test that converged fits print nothing."""
        manager, buffer = recording_manager()

        manager.start_fit(2)
        manager.complete_fit("tol_obj")

        assert "budget" not in buffer.getvalue()

    def test_new_bar_replaces_old(self):
        """Test that starting a grid stops a running benchmark bar."""
        manager, _ = recording_manager()

        manager.start_benchmark(3)
        manager.start_grid(4)
        manager.update_grid_progress(1, 4)
        manager.update_benchmark_progress(1, 3)

        assert list(manager._task_ids) == ["grid"]
        assert manager._progress.tasks[0].completed == 1
        manager.complete_grid()

    def test_print_status(self):
        """Test status lines on the console."""
        manager, buffer = recording_manager()

        manager.print_status("Wrote model")

        assert "Wrote model" in buffer.getvalue()


def test_create_progress_manager():
    """Test the factory."""
    assert create_progress_manager(enabled=False).enabled is False
