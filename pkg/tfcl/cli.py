"""Command-line interface for tfcl.

This module provides the ``tfcl`` command: synthetic data generation, model
fitting, evaluation, structure-recovery scoring and the simulated benchmark.
It handles argument parsing, configuration loading and logging setup, and
maps errors to exit codes.
"""

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import List, Optional

from tfcl import __version__
from tfcl.config import LoggingConfig, RunConfig, apply_seed, load_config, validate_config
from tfcl.core import run_benchmark, run_eval, run_fit_session, run_generate, run_recover
from tfcl.exceptions import ConfigError, TFCLError
from tfcl.logger import get_logger, setup_logging
from tfcl.progress import create_progress_manager

logger = get_logger(__name__)


# Exit codes
EXIT_SUCCESS = 0
EXIT_ERROR = 1
EXIT_MAX_ITERS = 2
EXIT_INTERRUPTED = 130

COMMANDS = ("generate", "fit", "eval", "recover", "benchmark")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("Common options")
    group.add_argument(
        "--config",
        "-c",
        type=str,
        metavar="PATH",
        help="Run configuration (JSON, YAML or TOML)",
    )
    group.add_argument(
        "--out",
        "-o",
        type=str,
        metavar="DIR",
        help="Output directory (default: output.out_dir of the configuration)",
    )
    group.add_argument(
        "--seed",
        type=int,
        metavar="N",
        help="Override every seed of the configuration",
    )
    group.add_argument(
        "--verbose",
        "-v",
        action="count",
        default=0,
        help="Increase verbosity level (-v for DEBUG)",
    )
    group.add_argument(
        "--no-progress",
        action="store_true",
        help="Disable progress bars",
    )
    group.add_argument(
        "--markdown",
        action="store_true",
        help="Also write Markdown renderings of the reports",
    )
    return common


def parse_args(args: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments.

    Args:
        args: List of command-line arguments. If None, uses sys.argv[1:].

    Returns:
        argparse.Namespace: Parsed arguments.
    """
    parser = argparse.ArgumentParser(
        prog="tfcl",
        description="Task-feature collaborative learning: fit, evaluate and inspect models",
        epilog=(
            "Every command is deterministic given its configuration and seed. "
            "TFCL_THREADS caps the worker threads of grid searches."
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--version",
        action="store_true",
        help="Show version information and exit",
    )

    common = _common_parser()
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")

    subparsers.add_parser(
        "generate", parents=[common], help="Generate the simulated block-structured dataset"
    )

    fit_parser = subparsers.add_parser("fit", parents=[common], help="Fit a model on a dataset")
    fit_parser.add_argument("--data", type=str, metavar="PATH", help="Dataset CSV")

    eval_parser = subparsers.add_parser(
        "eval", parents=[common], help="Mean user AUC of a fitted model"
    )
    eval_parser.add_argument("--model", type=str, metavar="DIR", help="Directory written by fit")
    eval_parser.add_argument("--data", type=str, metavar="PATH", help="Dataset CSV")

    recover_parser = subparsers.add_parser(
        "recover", parents=[common], help="Score structure recovery against a ground truth"
    )
    recover_parser.add_argument(
        "--model", type=str, metavar="DIR", help="Directory written by fit"
    )
    recover_parser.add_argument(
        "--ground-truth", type=str, metavar="PATH", help="Ground-truth JSON written by generate"
    )
    recover_parser.add_argument(
        "--threshold", type=float, metavar="X", help="Support threshold (default 1e-8 max|W|)"
    )

    subparsers.add_parser(
        "benchmark", parents=[common], help="Repeated simulated benchmark of the model variants"
    )

    return parser.parse_args(args)


def load_configuration(config_path: Optional[str] = None) -> RunConfig:
    """Load a run configuration, or the validated defaults when no path is given.

    Raises:
        ConfigError: If the file cannot be loaded.
        ValidationError: If the content is invalid.
    """
    if config_path is None:
        config = RunConfig()
        validate_config(config)
        return config

    try:
        config = load_config(config_path)
    except ConfigError as e:
        logger.error(f"Failed to load configuration: {e}")
        raise
    logger.info(f"Loaded configuration from: {config_path}")
    return config


def configure_logging(config: Optional[RunConfig], verbose_level: int = 0) -> None:
    """Set up logging from the run configuration, or the defaults without one."""
    if config is not None:
        setup_logging(config.logging, verbose_level=verbose_level)
    else:
        # Defaults until the configuration file is read
        setup_logging(LoggingConfig(), verbose_level=verbose_level)


def _require(value: Optional[str], option: str, key: str) -> str:
    if not value:
        raise ConfigError(f"Missing {option}: pass it on the command line or set {key}")
    return value


def cmd_generate(config: RunConfig, out_dir: Path) -> int:
    """Write the simulated dataset, its ground truth and a provenance record."""
    paths = run_generate(config, out_dir)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_SUCCESS


def cmd_fit(
    config: RunConfig, data_path: str, out_dir: Path, progress_enabled: bool = True
) -> int:
    """Fit the configured model; exit code 0 on convergence, 2 on max-iters."""
    progress = create_progress_manager(progress_enabled)
    session = run_fit_session(config, data_path, out_dir, progress)
    history = session.outcome.history
    print(
        f"{config.model.kind} model: {len(history)} iterations, stop reason "
        f"{history.stop_reason}, objective {history.final_objective:.10g}"
    )
    for name, value in session.metrics.items():
        print(f"{name} AUC: {value:.4f}")
    if not session.converged:
        logger.warning("Iteration budget exhausted before the stopping tolerances were met")
    return EXIT_SUCCESS if session.converged else EXIT_MAX_ITERS


def cmd_eval(config: RunConfig, model_dir: str, data_path: str, out_dir: Path) -> int:
    """Print the mean user AUC and the per-user AUC quantiles; write eval.json."""
    result = run_eval(config, model_dir, data_path, out_dir)
    evaluated = f"{result['evaluated_users']}/{result['users']} users"
    print(f"mean AUC: {result['mean_auc']:.4f} ({evaluated})")
    for q, value in result["quantiles"].items():
        print(f"  quantile {q}: {value:.4f}")
    return EXIT_SUCCESS


def cmd_recover(
    config: RunConfig,
    model_dir: str,
    gt_path: str,
    out_dir: Path,
    threshold: Optional[float] = None,
) -> int:
    """Write the recovery report, the grouping certificate and the |W| matrix."""
    result = run_recover(config, model_dir, gt_path, out_dir, threshold)
    recovery, certificate = result["recovery"], result["certificate"]
    print(
        f"precision {recovery['precision']:.4f}, recall {recovery['recall']:.4f}, "
        f"F1 {recovery['f1']:.4f}, components {recovery['component_count']}, "
        f"Rand index {recovery['rand_index']:.4f}"
    )
    if certificate["applicable"]:
        print(
            f"grouping certificate: no false positives "
            f"{certificate['no_false_positive_condition']}"
        )
    else:
        print(f"grouping certificate: {certificate['note']}")
    return EXIT_SUCCESS


def cmd_benchmark(config: RunConfig, out_dir: Path, progress_enabled: bool = True) -> int:
    """Run the repeated benchmark and print mean +- sd test AUC per variant."""
    result = run_benchmark(config, out_dir, create_progress_manager(progress_enabled))
    for row in result.summary():
        print(
            f"{row['variant']}: {row['mean_auc']:.4f} +- {row['sd_auc']:.4f} "
            f"({row['repetitions']} repetitions)"
        )
    return EXIT_SUCCESS


def main(args: Optional[List[str]] = None) -> int:
    """Main entry point for the tfcl CLI.

    Args:
        args: List of command-line arguments. If None, uses sys.argv[1:].

    Returns:
        int: Exit code (0 success, 1 error, 2 fit stopped at max_iters,
            130 interrupted).
    """
    parsed_args = parse_args(args)

    if parsed_args.version:
        print(f"tfcl {__version__}")
        return EXIT_SUCCESS

    if parsed_args.command not in COMMANDS:
        print("usage: tfcl {generate,fit,eval,recover,benchmark} [options]", file=sys.stderr)
        return EXIT_ERROR

    try:
        configure_logging(None, parsed_args.verbose)
        config = load_configuration(parsed_args.config)
        configure_logging(config, parsed_args.verbose)

        if parsed_args.seed is not None:
            config = apply_seed(config, parsed_args.seed)
        if parsed_args.markdown:
            config = dataclasses.replace(
                config, output=dataclasses.replace(config.output, markdown=True)
            )
        progress_enabled = config.progress.enabled and not parsed_args.no_progress
        out_dir = Path(parsed_args.out or config.output.out_dir)

        command = parsed_args.command
        if command == "generate":
            return cmd_generate(config, out_dir)
        if command == "fit":
            data_path = _require(parsed_args.data or config.data.path, "--data", "data.path")
            return cmd_fit(config, data_path, out_dir, progress_enabled)
        if command == "eval":
            model_dir = _require(
                parsed_args.model or config.evaluation.model_dir,
                "--model",
                "evaluation.model_dir",
            )
            data_path = _require(parsed_args.data or config.data.path, "--data", "data.path")
            return cmd_eval(config, model_dir, data_path, out_dir)
        if command == "recover":
            model_dir = _require(
                parsed_args.model or config.evaluation.model_dir,
                "--model",
                "evaluation.model_dir",
            )
            gt_path = _require(
                parsed_args.ground_truth or config.data.ground_truth,
                "--ground-truth",
                "data.ground_truth",
            )
            threshold = (
                parsed_args.threshold
                if parsed_args.threshold is not None
                else config.evaluation.threshold
            )
            return cmd_recover(config, model_dir, gt_path, out_dir, threshold)
        return cmd_benchmark(config, out_dir, progress_enabled)

    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_INTERRUPTED

    except TFCLError as e:
        logger.error(f"{parsed_args.command} failed: {e}")
        return EXIT_ERROR

    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
