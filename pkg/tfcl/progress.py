"""Progress bars module for tfcl.

Progress display for fits, grid searches and benchmark repetitions using
the rich library. Bars are drawn on stderr so stdout stays reserved for
command results.
"""

from typing import Callable, Dict, Optional

from rich.console import Console
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TaskID,
    TextColumn,
    TimeElapsedColumn,
    TimeRemainingColumn,
)
from rich.style import Style


class ProgressManager:
    """Manager for displaying progress bars and spinners.

    One bar is active at a time. Every method is a no-op when the manager
    is disabled, so callers never need to check.
    """

    def __init__(self, enabled: bool = True, console: Optional[Console] = None):
        """Initialize the progress manager.

        Args:
            enabled: Whether progress bars are enabled.
            console: Optional rich Console instance (stderr by default).
        """
        self.enabled = enabled
        self.console = console or Console(stderr=True)
        self._progress: Optional[Progress] = None
        self._task_ids: Dict[str, TaskID] = {}

    def create_progress_bar(self, description: str = "Working...") -> Optional[Progress]:
        """Create a progress bar.

        Args:
            description: Description of the task.

        Returns:
            Optional[Progress]: Progress bar instance, or None if disabled.
        """
        if not self.enabled:
            return None

        self._progress = Progress(
            SpinnerColumn(),
            TextColumn("[bold blue]{task.description}"),
            BarColumn(bar_width=40),
            TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
            TimeElapsedColumn(),
            TimeRemainingColumn(),
            console=self.console,
            transient=True,
        )
        return self._progress

    def _start(self, key: str, description: str, total: int) -> Optional[TaskID]:
        if not self.enabled:
            return None
        self._stop()
        progress = self.create_progress_bar(description)
        if progress is None:
            return None
        progress.start()
        self._task_ids[key] = progress.add_task(description, total=total)
        return self._task_ids[key]

    def _advance(self, key: str, description: Optional[str] = None, advance: int = 1) -> None:
        if not self.enabled or key not in self._task_ids or self._progress is None:
            return
        if description is None:
            self._progress.update(self._task_ids[key], advance=advance)
        else:
            self._progress.update(self._task_ids[key], advance=advance, description=description)

    def _stop(self) -> None:
        if self._progress:
            self._progress.stop()
            self._progress = None
        self._task_ids.clear()

    def start_fit(self, max_iters: int, label: str = "Fitting") -> Optional[TaskID]:
        """Start a bar over the iteration budget of one fit."""
        return self._start("fit", label, max_iters)

    def fit_callback(self, label: str = "Fitting") -> Callable[[int, float], None]:
        """Solver callback that advances the fit bar with the current objective."""

        def callback(iteration: int, objective: float) -> None:
            self._advance("fit", f"{label} (iteration {iteration}, objective {objective:.6g})")

        return callback

    def complete_fit(self, stop_reason: str) -> None:
        """Stop the fit bar and report why the solver stopped."""
        self._stop()
        if self.enabled and stop_reason == "max_iters":
            self.console.print(
                "[yellow]Warning:[/yellow] iteration budget exhausted before convergence",
                style=Style(color="yellow"),
            )

    def start_grid(self, total: int) -> Optional[TaskID]:
        """Start a bar over grid points."""
        return self._start("grid", f"Grid search ({total} points)", total)

    def update_grid_progress(self, completed: int, total: int) -> None:
        """Advance the grid bar by one finished point."""
        self._advance("grid", f"Grid search ({completed}/{total})")

    def complete_grid(self) -> None:
        self._stop()

    def start_benchmark(self, repetitions: int) -> Optional[TaskID]:
        """Start a bar over benchmark repetitions."""
        return self._start("benchmark", f"Benchmark ({repetitions} repetitions)", repetitions)

    def update_benchmark_progress(self, repetition: int, total: int) -> None:
        """Advance the benchmark bar by one finished repetition."""
        self._advance("benchmark", f"Benchmark ({repetition}/{total})")

    def complete_benchmark(self) -> None:
        self._stop()

    def print_status(self, message: str) -> None:
        """Print a status line when enabled."""
        if self.enabled:
            self.console.print(f"[bold blue]{message}")


def create_progress_manager(enabled: bool = True) -> ProgressManager:
    """Create a progress manager.

    Args:
        enabled: Whether progress bars are enabled.

    Returns:
        ProgressManager: Configured progress manager.
    """
    return ProgressManager(enabled=enabled)
