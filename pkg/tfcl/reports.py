"""Report and artifact writing for tfcl.

Matrices are written as header-less CSV with ``\\r\\n`` line endings and
``%.17g`` floats so a written matrix reads back bit-exact. Reports are
rendered as canonical JSON or as Markdown.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from tfcl.exceptions import DatasetError, ValidationError
from tfcl.utils import as_finite_array, stable_json_dumps

FLOAT_FORMAT = "%.17g"
LINE_TERMINATOR = "\r\n"


def write_matrix_csv(matrix: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a 2-D array as a header-less full-precision CSV."""
    matrix = as_finite_array(matrix, "matrix", ndim=2)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(matrix).to_csv(
        path,
        header=False,
        index=False,
        float_format=FLOAT_FORMAT,
        lineterminator=LINE_TERMINATOR,
    )
    return path


def read_matrix_csv(path: Union[str, Path]) -> np.ndarray:
    """Read a matrix written by :func:`write_matrix_csv`.

    Raises:
        DatasetError: If the file is missing, empty, ragged, non-numeric or
            holds non-finite values.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Matrix file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, dtype=np.float64, float_precision="round_trip")
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"Matrix file is empty: {path}") from e
    except (ValueError, pd.errors.ParserError) as e:
        raise DatasetError(f"Malformed matrix file {path}: {e}") from e

    matrix = frame.to_numpy()
    if not np.all(np.isfinite(matrix)):
        rows = sorted({int(r) + 1 for r in np.argwhere(~np.isfinite(matrix))[:, 0]})
        raise DatasetError(
            f"Matrix file {path} has missing or non-finite values on lines {rows[:10]}"
        )
    return matrix


def write_history_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a history frame (index = iteration) with the matrix CSV conventions."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, float_format=FLOAT_FORMAT, lineterminator=LINE_TERMINATOR)
    return path


@dataclass
class ReportConfig:
    """Configuration for report generation.

    Attributes:
        format: "json" or "markdown".
        output_path: Where the report is saved.
    """

    format: str = "json"
    output_path: str = ""


@dataclass
class ReportData:
    """Content of a run report.

    Attributes:
        title: Heading of the report.
        command: Subcommand that produced it.
        summary: Top-level key/value facts.
        sections: Named key/value groups (metrics, recovery, certificate...).
        table: Rows of a result table (benchmark variants, grid points).
    """

    title: str = "tfcl run"
    command: str = ""
    summary: Dict[str, Any] = field(default_factory=dict)
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    table: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "title": self.title,
            "command": self.command,
            "summary": self.summary,
            "sections": self.sections,
            "table": self.table,
        }


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if math.isnan(value):
            return "n/a"
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    if value is None:
        return "-"
    return str(value)


class ReportGenerator:
    """Renders :class:`ReportData` as JSON or Markdown."""

    FORMATS = ("json", "markdown", "md")

    def __init__(self, config: ReportConfig):
        if config.format.lower() not in self.FORMATS:
            raise ValidationError(
                f"Unknown report format '{config.format}', expected json or markdown"
            )
        self.config = config

    def generate(self, data: ReportData) -> str:
        """Render the report in the configured format."""
        if self.config.format.lower() == "json":
            return self._generate_json(data)
        return self._generate_markdown(data)

    def generate_and_save(self, data: ReportData) -> Optional[Path]:
        """Render and write the report; None when no output path is set."""
        if not self.config.output_path:
            return None
        output_path = Path(self.config.output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        output_path.write_text(self.generate(data), encoding="utf-8")
        return output_path

    def _generate_json(self, data: ReportData) -> str:
        return stable_json_dumps(data.to_dict())

    def _generate_markdown(self, data: ReportData) -> str:
        lines = [f"# {data.title}", ""]
        if data.command:
            lines += [f"Command: `tfcl {data.command}`", ""]

        if data.summary:
            lines += ["## Summary", "", "| Metric | Value |", "|--------|-------|"]
            lines += [
                f"| {key} | {_format_value(data.summary[key])} |" for key in sorted(data.summary)
            ]
            lines.append("")

        for name in sorted(data.sections):
            section = data.sections[name]
            lines += [f"## {name.replace('_', ' ').capitalize()}", ""]
            scalar_keys = [k for k in sorted(section) if not isinstance(section[k], dict)]
            lines += [f"- **{key}**: {_format_value(section[key])}" for key in scalar_keys]
            lines.append("")

        if data.table:
            columns = list(data.table[0])
            lines += [
                "## Results",
                "",
                "| " + " | ".join(columns) + " |",
                "|" + "|".join("---" for _ in columns) + "|",
            ]
            for row in data.table:
                lines.append("| " + " | ".join(_format_value(row.get(c)) for c in columns) + " |")
            lines.append("")

        return "\n".join(lines)


def create_report_config(output_path: str = "", report_format: str = "json") -> ReportConfig:
    """Create a report configuration."""
    return ReportConfig(format=report_format, output_path=output_path)
