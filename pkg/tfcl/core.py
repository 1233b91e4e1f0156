"""Experiment orchestration module for tfcl.

This module drives the steps behind the command-line subcommands: it
generates synthetic data, runs fit sessions (optionally grid-tuned on the
validation split), evaluates saved models, scores structure recovery and
runs the repeated simulated benchmark. Every session writes its artifacts
into one output directory.
"""

import dataclasses
import itertools
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from tfcl import __version__
from tfcl.bipartite import build_laplacian, embeddings
from tfcl.config import INTEGER_GRID_FIELDS, QConfig, RunConfig, TFCLConfig, config_to_dict
from tfcl.data import (
    GroundTruth,
    dataset_summary,
    filter_min_minority,
    generate_simulated,
    load_dataset,
    save_dataset,
    split,
)
from tfcl.diagnostics import (
    convergence_report,
    grouping_certificate,
    recovery_report,
)
from tfcl.exceptions import DatasetError, TFCLError, ValidationError
from tfcl.logger import get_logger
from tfcl.losses import MultiTaskDataset, dataset_auc, dataset_scores, make_loss, user_auc_scores
from tfcl.personalized import PersonalizedParams, fit_personalized, lasso_baseline
from tfcl.progress import ProgressManager
from tfcl.reports import (
    ReportConfig,
    ReportData,
    ReportGenerator,
    read_matrix_csv,
    write_history_csv,
    write_matrix_csv,
)
from tfcl.solver import FitHistory, IterationCallback, fit
from tfcl.spectral import sym_eig, u_update
from tfcl.utils import config_hash, resolve_threads, write_json

logger = get_logger(__name__)

DATASET_FILE = "dataset.csv"
GROUND_TRUTH_FILE = "ground_truth.json"
MODEL_FILE = "model.json"
HISTORY_FILE = "history.csv"
QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)

ModelSettings = Union[TFCLConfig, QConfig]


@dataclass
class FitOutcome:
    """Result of one solver run.

    Attributes:
        W: Weights used for scoring (theta_c + theta_g + theta_p when personalized).
        U: Final U.
        history: Solver history.
        settings: Solver settings actually used.
        params: Personalized components, None for the base model.
    """

    W: np.ndarray
    U: np.ndarray
    history: FitHistory
    settings: ModelSettings
    params: Optional[PersonalizedParams] = None

    @property
    def structure_weights(self) -> np.ndarray:
        """Matrix whose graph carries the learned grouping."""
        return self.params.theta_g if self.params is not None else self.W


@dataclass
class GridResult:
    """Scores of every grid point and the winner.

    Attributes:
        points: Parameter overrides per point, in evaluation order.
        scores: Validation AUC per point (NaN when it could not be scored).
        best_index: Index of the winning point.
    """

    points: List[Dict[str, Any]]
    scores: List[float]
    best_index: int

    @property
    def best_params(self) -> Dict[str, Any]:
        return self.points[self.best_index]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "points": [
                {"index": i, "params": p, "validation_auc": s}
                for i, (p, s) in enumerate(zip(self.points, self.scores))
            ],
            "best_index": self.best_index,
            "best_params": self.best_params,
        }


@dataclass
class FitSession:
    """Everything produced by ``tfcl fit``.

    Attributes:
        config: Run configuration.
        out_dir: Output directory.
        outcome: Final solver run.
        metrics: Mean user AUC per split ("train", "validation", "test").
        grid: Grid search result, if one ran.
    """

    config: RunConfig
    out_dir: Path
    outcome: FitOutcome
    metrics: Dict[str, float] = field(default_factory=dict)
    grid: Optional[GridResult] = None

    @property
    def converged(self) -> bool:
        return self.outcome.history.converged

    @property
    def exit_code(self) -> int:
        """0 when a tolerance stopped the run, 2 when the budget ran out."""
        return 0 if self.converged else 2


def active_settings(config: RunConfig) -> ModelSettings:
    """Solver settings of the configured model kind."""
    return config.base if config.model.kind == "base" else config.personalized


def with_overrides(settings: ModelSettings, overrides: Dict[str, Any]) -> ModelSettings:
    """Copy of ``settings`` with grid values applied, integer fields cast to int."""
    values = {
        name: int(v) if name in INTEGER_GRID_FIELDS else v for name, v in overrides.items()
    }
    return dataclasses.replace(settings, **values)


def fit_model(
    train: MultiTaskDataset,
    config: RunConfig,
    settings: Optional[ModelSettings] = None,
    callback: Optional[IterationCallback] = None,
) -> FitOutcome:
    """Fit the configured model kind on ``train``."""
    settings = settings or active_settings(config)
    if isinstance(settings, QConfig):
        params, U, history = fit_personalized(train, settings, callback=callback)
        return FitOutcome(params.effective_weights(), U, history, settings, params)
    W, U, history = fit(train, make_loss(config.model.base_loss), settings, callback=callback)
    return FitOutcome(W, U, history, settings)


def _score(W: np.ndarray, data: MultiTaskDataset) -> float:
    try:
        return dataset_auc(W, data)
    except DatasetError:
        return math.nan


def grid_points(params: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
    """Cartesian product of the grid, parameters in sorted name order."""
    names = sorted(params)
    return [dict(zip(names, values)) for values in itertools.product(*(params[n] for n in names))]


def select_best(scores: List[float]) -> int:
    """Index of the highest finite score; the lowest index wins ties.

    Raises:
        ValidationError: If no score is finite.
    """
    finite = [(i, s) for i, s in enumerate(scores) if math.isfinite(s)]
    if not finite:
        raise ValidationError("No grid point could be scored on the validation split")
    best = max(s for _, s in finite)
    return min(i for i, s in finite if s == best)


def run_grid_search(
    train: MultiTaskDataset,
    val: MultiTaskDataset,
    config: RunConfig,
    out_dir: Optional[Path] = None,
    progress: Optional[ProgressManager] = None,
) -> GridResult:
    """Fit every grid point on ``train`` and score it on ``val``.

    Points run on a thread pool capped by ``TFCL_THREADS``. Each point writes
    into its own ``grid/point_XXX`` directory; the winner is chosen after
    all points finished. A point that fails with a tfcl error scores NaN.
    """
    points = grid_points(config.grid.params)
    if not points:
        raise ValidationError("Grid search needs at least one parameter")
    base_settings = active_settings(config)
    scores: List[float] = [math.nan] * len(points)
    lock = threading.Lock()

    def run_point(index: int) -> Tuple[int, float]:
        settings = with_overrides(base_settings, points[index])
        try:
            outcome = fit_model(train, config, settings)
        except TFCLError as e:
            logger.warning(f"Grid point {index} {points[index]} failed: {e}")
            return index, math.nan
        score = _score(outcome.W, val)
        if out_dir is not None:
            point_dir = out_dir / "grid" / f"point_{index:03d}"
            write_json(
                {"index": index, "params": points[index], "validation_auc": score},
                point_dir / "point.json",
            )
            write_history_csv(outcome.history.to_frame(), point_dir / HISTORY_FILE)
        return index, score

    workers = min(resolve_threads(), len(points))
    logger.info(f"Grid search over {len(points)} point(s) with {workers} worker(s)")
    if progress:
        progress.start_grid(len(points))
    try:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(run_point, i) for i in range(len(points))]
            for completed, future in enumerate(as_completed(futures), start=1):
                index, score = future.result()
                with lock:
                    scores[index] = score
                if progress:
                    progress.update_grid_progress(completed, len(points))
    finally:
        if progress:
            progress.complete_grid()

    best = select_best(scores)
    logger.info(f"Best grid point {best}: {points[best]} (validation AUC {scores[best]:.4f})")
    return GridResult(points=points, scores=scores, best_index=best)


def prepare_data(
    config: RunConfig, data_path: Union[str, Path]
) -> Tuple[MultiTaskDataset, MultiTaskDataset, MultiTaskDataset, MultiTaskDataset]:
    """Load, filter and split a dataset.

    Returns:
        tuple: (full, train, validation, test).
    """
    data = load_dataset(data_path)
    if config.data.min_minority > 0:
        data = filter_min_minority(data, config.data.min_minority)
    fractions = (config.split.train, config.split.val, config.split.test)
    train, val, test = split(data, fractions, config.split.seed)
    return data, train, val, test


def provenance(config: RunConfig, command: str, **extra: Any) -> Dict[str, Any]:
    """Provenance record: command, seed, config, config hash and version."""
    config_dict = config_to_dict(config)
    record = {
        "command": command,
        "seed": config.split.seed,
        "config": config_dict,
        "config_hash": config_hash(config_dict),
        "version": __version__,
    }
    record.update(extra)
    return record


def _write_report(data: ReportData, config: RunConfig, out_dir: Path, stem: str) -> None:
    if config.output.markdown:
        output_path = str(out_dir / f"{stem}.md")
        ReportGenerator(ReportConfig(format="markdown", output_path=output_path)).generate_and_save(
            data
        )


def eigen_summary(outcome: FitOutcome) -> Dict[str, Any]:
    """Spectrum of the final graph and of U, with the U-update quantities."""
    weights = outcome.structure_weights
    k = outcome.settings.k
    laplacian = build_laplacian(weights)
    summary: Dict[str, Any] = {
        "k": k,
        "laplacian_eigenvalues": sym_eig(laplacian.matrix).values,
        "U_eigenvalues": np.linalg.eigvalsh(outcome.U),
        "U_trace": float(np.trace(outcome.U)),
    }
    if not laplacian.is_zero:
        solution = u_update(laplacian, k, outcome.settings.gap_tol)
        summary.update(
            {
                "c": solution.c,
                "p": solution.p,
                "q": solution.q,
                "breve_delta": solution.breve_delta,
            }
        )
    return summary


def write_fit_outputs(session: FitSession, data: MultiTaskDataset, data_path: str) -> None:
    """Write matrices, history, reports and provenance of a fit session."""
    out_dir, outcome, config = session.out_dir, session.outcome, session.config
    history = outcome.history
    out_dir.mkdir(parents=True, exist_ok=True)

    write_matrix_csv(outcome.W, out_dir / "W.csv")
    if outcome.params is not None:
        write_matrix_csv(outcome.params.theta_c[:, None], out_dir / "theta_c.csv")
        write_matrix_csv(outcome.params.theta_g, out_dir / "theta_g.csv")
        write_matrix_csv(outcome.params.theta_p, out_dir / "theta_p.csv")
    for t, V in sorted(history.embeddings.items()):
        write_matrix_csv(np.vstack(embeddings(V)), out_dir / f"embeddings_iter_{t}.csv")

    write_json(eigen_summary(outcome), out_dir / "U_eigen.json")
    write_history_csv(history.to_frame(), out_dir / HISTORY_FILE)
    timing = pd.DataFrame({"wall_time": history.wall_time})
    timing.index = pd.RangeIndex(1, len(history) + 1, name="iteration")
    write_history_csv(timing, out_dir / "timing.csv")

    report = convergence_report(history)
    write_json(report.to_dict(), out_dir / "convergence.json")

    model = {
        "kind": config.model.kind,
        "loss": config.model.base_loss if outcome.params is None else outcome.settings.loss,
        "d": data.d,
        "T": data.T,
        "task_ids": list(data.task_ids),
        "settings": config_to_dict(outcome.settings),
        "lipschitz": history.lipschitz,
        "C": history.C,
        "initial_objective": history.initial_objective,
        "final_objective": history.final_objective,
        "iterations": len(history),
        "converged": history.converged,
        "stop_reason": history.stop_reason,
        "metrics": session.metrics,
        "grid": session.grid.to_dict() if session.grid else None,
        "outlier_users": outcome.params.outlier_users() if outcome.params is not None else [],
    }
    write_json(model, out_dir / MODEL_FILE)
    write_json(
        provenance(config, "fit", data_path=data_path, data=dataset_summary(data)),
        out_dir / "provenance.json",
    )

    summary = {key: model[key] for key in ("kind", "iterations", "converged", "stop_reason")}
    summary["final_objective"] = history.final_objective
    _write_report(
        ReportData(
            title=f"{config.experiment.name}: fit",
            command="fit",
            summary=summary,
            sections={"metrics": dict(session.metrics), "convergence": report.to_dict()},
            table=session.grid.to_dict()["points"] if session.grid else [],
        ),
        config,
        out_dir,
        "fit_report",
    )


def run_fit_session(
    config: RunConfig,
    data_path: Union[str, Path],
    out_dir: Union[str, Path],
    progress: Optional[ProgressManager] = None,
) -> FitSession:
    """Fit the configured model and write every artifact into ``out_dir``.

    With ``grid.enabled`` the grid is tuned on the validation split first and
    the final model is refit on the training split with the winning values.
    """
    out_dir = Path(out_dir)
    data, train, val, test = prepare_data(config, data_path)

    grid: Optional[GridResult] = None
    settings = active_settings(config)
    if config.grid.enabled and config.grid.params:
        grid = run_grid_search(train, val, config, out_dir, progress)
        settings = with_overrides(settings, grid.best_params)

    callback = None
    if progress:
        progress.start_fit(settings.max_iters, f"Fitting {config.model.kind} model")
        callback = progress.fit_callback(f"Fitting {config.model.kind} model")
    try:
        outcome = fit_model(train, config, settings, callback)
    except BaseException:
        if progress:
            progress.complete_fit("")
        raise
    if progress:
        progress.complete_fit(outcome.history.stop_reason)

    metrics = {"train": _score(outcome.W, train), "validation": _score(outcome.W, val)}
    metrics["test"] = _score(outcome.W, test)
    session = FitSession(config, out_dir, outcome, metrics=metrics, grid=grid)
    write_fit_outputs(session, data, str(data_path))
    logger.info(
        f"Fit session written to {out_dir}: test AUC {metrics['test']:.4f}, "
        f"stop reason {outcome.history.stop_reason}"
    )
    return session


def run_generate(config: RunConfig, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Generate the synthetic dataset and its ground truth into ``out_dir``."""
    out_dir = Path(out_dir)
    data, gt = generate_simulated(config.simulation)
    paths = {
        "dataset": save_dataset(data, out_dir / DATASET_FILE),
        "ground_truth": gt.save(out_dir / GROUND_TRUTH_FILE),
    }
    paths["provenance"] = write_json(
        provenance(
            config,
            "generate",
            seed=config.simulation.seed,
            data=dataset_summary(data),
            components=len(gt.blocks),
        ),
        out_dir / "provenance.json",
    )
    return paths


def load_model(model_dir: Union[str, Path]) -> Tuple[Dict[str, Any], np.ndarray]:
    """Read ``model.json`` and the scoring weights of a fit directory.

    Raises:
        DatasetError: If the directory misses model files.
    """
    model_dir = Path(model_dir)
    model_path = model_dir / MODEL_FILE
    if not model_path.is_file():
        raise DatasetError(f"No {MODEL_FILE} in {model_dir}")
    model = json.loads(model_path.read_text(encoding="utf-8"))
    W = read_matrix_csv(model_dir / "W.csv")
    if W.shape != (model["d"], model["T"]):
        expected = (model["d"], model["T"])
        raise DatasetError(f"W.csv has shape {W.shape}, {MODEL_FILE} says {expected}")
    return model, W


def load_history(model_dir: Union[str, Path], model: Dict[str, Any]) -> FitHistory:
    """Rebuild a FitHistory from ``history.csv`` and ``model.json``."""
    frame = pd.read_csv(Path(model_dir) / HISTORY_FILE, index_col=0, float_precision="round_trip")
    history = FitHistory(
        objective=frame["objective"].astype(float).tolist(),
        delta_W=frame["delta_W"].astype(float).tolist(),
        delta_U=frame["delta_U"].astype(float).tolist(),
        subgradient_bound=frame["subgradient_bound"].astype(float).tolist(),
        breve_delta=frame["breve_delta"].astype(float).tolist(),
        wall_time=[math.nan] * len(frame),
        degenerate=frame["degenerate"].astype(bool).tolist(),
        grad_inf_norm=frame["grad_inf_norm"].astype(float).tolist(),
        initial_objective=float(model["initial_objective"]),
        lipschitz=float(model["lipschitz"]),
        C=float(model["C"]),
        converged=bool(model["converged"]),
        stop_reason=str(model["stop_reason"]),
    )
    return history


def _align_users(data: MultiTaskDataset, task_ids: List[str]) -> List[int]:
    index = {task_id: i for i, task_id in enumerate(task_ids)}
    missing = [u for u in data.task_ids if u not in index]
    if missing:
        raise DatasetError(f"{len(missing)} user(s) unknown to the model: {', '.join(missing[:5])}")
    return [index[u] for u in data.task_ids]


def evaluate_model(
    model_dir: Union[str, Path], data_path: Union[str, Path]
) -> Dict[str, Any]:
    """Mean user AUC and per-user AUC quantiles of a saved model on a dataset.

    Users are matched to model columns by ``user_id``.

    Raises:
        DatasetError: Unknown users, a feature-count mismatch, or no user
            with both classes.
    """
    model, W = load_model(model_dir)
    data = load_dataset(data_path)
    if data.d != W.shape[0]:
        raise DatasetError(f"Dataset has {data.d} features, model has {W.shape[0]}")
    columns = _align_users(data, model["task_ids"])
    per_user = user_auc_scores(dataset_scores(W[:, columns], data), data.y)
    evaluable = per_user[~np.isnan(per_user)]
    if evaluable.size == 0:
        raise DatasetError("No user has both classes; AUC is undefined")
    quantiles = np.quantile(evaluable, QUANTILES)
    return {
        "mean_auc": float(np.mean(evaluable)),
        "users": data.T,
        "evaluated_users": int(evaluable.size),
        "quantiles": {f"{q:g}": float(v) for q, v in zip(QUANTILES, quantiles)},
        "per_user": {u: float(a) for u, a in zip(data.task_ids, per_user)},
    }


def run_eval(
    config: RunConfig,
    model_dir: Union[str, Path],
    data_path: Union[str, Path],
    out_dir: Union[str, Path],
) -> Dict[str, Any]:
    """Evaluate a saved model and write ``eval.json``."""
    out_dir = Path(out_dir)
    result = evaluate_model(model_dir, data_path)
    write_json(result, out_dir / "eval.json")
    summary = {k: result[k] for k in ("mean_auc", "users", "evaluated_users")}
    _write_report(
        ReportData(
            title=f"{config.experiment.name}: eval",
            command="eval",
            summary=summary,
            sections={"quantiles": result["quantiles"]},
        ),
        config,
        out_dir,
        "eval_report",
    )
    return result


def run_recover(
    config: RunConfig,
    model_dir: Union[str, Path],
    gt_path: Union[str, Path],
    out_dir: Union[str, Path],
    threshold: Optional[float] = None,
) -> Dict[str, Any]:
    """Score structure recovery and the grouping certificate of a saved fit.

    Writes ``recovery.json`` and ``W_abs.csv`` (the |W| heatmap data).
    """
    out_dir = Path(out_dir)
    model, W = load_model(model_dir)
    gt = GroundTruth.load(gt_path)
    if model["kind"] == "personalized":
        W = read_matrix_csv(Path(model_dir) / "theta_g.csv")
    report = recovery_report(W, gt, threshold)

    settings_cls = TFCLConfig if model["kind"] == "base" else QConfig
    settings = settings_cls(**model["settings"])
    history = load_history(model_dir, model)
    spectrum = sym_eig(build_laplacian(W).matrix)
    certificate = grouping_certificate(history, spectrum, settings, gt.group_sizes())

    write_matrix_csv(np.abs(W), out_dir / "W_abs.csv")
    result = {"recovery": report.to_dict(), "certificate": certificate.to_dict()}
    write_json(result, out_dir / "recovery.json")
    _write_report(
        ReportData(
            title=f"{config.experiment.name}: recovery",
            command="recover",
            summary={"f1": report.f1, "components": report.component_count},
            sections=result,
        ),
        config,
        out_dir,
        "recovery_report",
    )
    return result


@dataclass
class BenchmarkResult:
    """Test AUC per repetition and variant.

    Attributes:
        scores: ``scores[variant]`` lists the test AUC of each repetition.
        rate_trend_ok: Per TFCL variant, the fraction of fits whose final
            running mean of squared subgradient bounds is at most half its
            value at the quarter-way iteration.
    """

    scores: Dict[str, List[float]] = field(default_factory=dict)
    rate_trend_ok: Dict[str, float] = field(default_factory=dict)

    def summary(self) -> List[Dict[str, Any]]:
        """Mean and standard deviation per variant."""
        rows = []
        for variant, values in self.scores.items():
            array = np.asarray(values, dtype=float)
            rows.append(
                {
                    "variant": variant,
                    "mean_auc": float(np.nanmean(array)),
                    "sd_auc": float(np.nanstd(array, ddof=1)) if array.size > 1 else 0.0,
                    "repetitions": int(array.size),
                }
            )
        return rows


def _lasso_variant(
    train: MultiTaskDataset, val: MultiTaskDataset, test: MultiTaskDataset, config: RunConfig
) -> float:
    candidates = [lasso_baseline(train, lam, config.base) for lam in config.benchmark.lasso_grid]
    best = select_best([_score(W, val) for W in candidates])
    return _score(candidates[best], test)


def run_benchmark(
    config: RunConfig,
    out_dir: Union[str, Path],
    progress: Optional[ProgressManager] = None,
) -> BenchmarkResult:
    """Repeat generate, split, tune and test on the simulated protocol.

    Repetition r uses seed ``simulation.seed + r`` for data and split. The
    "auc" and "squared" variants fit the personalized model with that loss
    (grid-tuned on validation when the grid is enabled); "lasso" fits the
    independent baseline tuned over ``benchmark.lasso_grid``.
    """
    out_dir = Path(out_dir)
    result = BenchmarkResult(scores={v: [] for v in config.benchmark.variants})
    trends: Dict[str, List[bool]] = {v: [] for v in config.benchmark.variants if v != "lasso"}
    repetitions = config.benchmark.repetitions
    tune_personalized = (
        config.model.kind == "personalized" and config.grid.enabled and bool(config.grid.params)
    )

    if progress:
        progress.start_benchmark(repetitions)
    try:
        for r in range(repetitions):
            seed = config.simulation.seed + r
            spec = dataclasses.replace(config.simulation, seed=seed)
            data, _ = generate_simulated(spec)
            fractions = (config.split.train, config.split.val, config.split.test)
            train, val, test = split(data, fractions, seed)

            for variant in config.benchmark.variants:
                if variant == "lasso":
                    result.scores[variant].append(_lasso_variant(train, val, test, config))
                    continue
                run_config = dataclasses.replace(
                    config,
                    model=dataclasses.replace(config.model, kind="personalized"),
                    personalized=dataclasses.replace(config.personalized, loss=variant, seed=seed),
                )
                settings: ModelSettings = run_config.personalized
                if tune_personalized:
                    grid = run_grid_search(train, val, run_config)
                    settings = with_overrides(settings, grid.best_params)
                outcome = fit_model(train, run_config, settings)
                result.scores[variant].append(_score(outcome.W, test))
                trends[variant].append(convergence_report(outcome.history).rate_trend_ok)

            logger.info(
                f"Benchmark repetition {r + 1}/{repetitions}: "
                + ", ".join(f"{v}={s[-1]:.4f}" for v, s in result.scores.items())
            )
            if progress:
                progress.update_benchmark_progress(r + 1, repetitions)
    finally:
        if progress:
            progress.complete_benchmark()

    result.rate_trend_ok = {v: float(np.mean(t)) for v, t in trends.items() if t}
    rows = result.summary()
    frame = pd.DataFrame(result.scores)
    frame.index = pd.RangeIndex(1, repetitions + 1, name="repetition")
    write_history_csv(frame, out_dir / "benchmark_scores.csv")
    write_json(
        {"summary": rows, "scores": result.scores, "rate_trend_ok": result.rate_trend_ok},
        out_dir / "benchmark.json",
    )
    write_json(provenance(config, "benchmark"), out_dir / "provenance.json")
    _write_report(
        ReportData(
            title=f"{config.experiment.name}: benchmark",
            command="benchmark",
            summary={"repetitions": repetitions},
            table=rows,
        ),
        config,
        out_dir,
        "benchmark_report",
    )
    return result

