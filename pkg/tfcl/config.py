"""Configuration management module for tfcl.

Every tunable of the solvers, the data generator and the experiment
front end is a dataclass field here. Run configurations are read from
JSON, YAML or TOML; unknown keys are rejected so that a typo never
silently falls back to a default.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import toml
import yaml

from tfcl.exceptions import ConfigError, ValidationError


INTEGER_GRID_FIELDS = frozenset({"k", "max_iters", "obj_patience"})


def _is_integral(value: Any) -> bool:
    if isinstance(value, bool):
        return False
    return isinstance(value, int) or (isinstance(value, float) and value.is_integer())


@dataclass
class TFCLConfig:
    """Settings of the base alternating solver.

    Attributes:
        k: Target number of task-feature groups.
        alpha1: Weight of the block-diagonal spectral regularizer.
        alpha2: Weight of the squared Frobenius penalty.
        C: Step constant; None selects ``safety * lipschitz`` at fit time.
        safety: Multiplier applied to the Lipschitz constant when C is None.
        max_iters: Maximum number of outer iterations.
        tol_param: Stop when ||dW||_F + ||dU||_F falls to this value.
        tol_obj: Relative objective change counted as stalled.
        obj_patience: Consecutive stalled iterations that stop the run.
        gap_tol: Relative tolerance under which eigenvalues count as tied.
        seed: Seed for every randomized step of the fit.
        record_embeddings: Number of leading iterations whose spectral
            embeddings are kept in the history (0 disables).
        debug: Cross-check the distance form of the graph term against the
            trace form every iteration.
    """

    k: int = 3
    alpha1: float = 1.0
    alpha2: float = 0.1
    C: Optional[float] = None
    safety: float = 1.01
    max_iters: int = 500
    tol_param: float = 1e-6
    tol_obj: float = 1e-8
    obj_patience: int = 5
    gap_tol: float = 1e-8
    seed: int = 0
    record_embeddings: int = 0
    debug: bool = False


@dataclass
class QConfig:
    """Settings of the personalized (consensus/group/personal) solver.

    Attributes:
        k: Target number of task-feature groups for the group component.
        lam_c: Ridge weight on the consensus vector theta_c.
        lam_graph: Weight of the spectral regularizer on theta_g.
        lam_g: Ridge weight on theta_g.
        lam_p: Column-wise l1,2 weight on theta_p.
        C: Step constant; None selects ``safety * lipschitz``.
        safety: Multiplier applied to the Lipschitz constant when C is None.
        lipschitz: "bound" for the closed-form constant, "exact" for the
            largest Hessian eigenvalue found by power iteration.
        loss: "auc" for the squared AUC surrogate, "squared" for the
            instance-wise squared loss.
        init: "ridge" warm-starts theta_c on pooled data, "zero" starts
            every component at 0.
        max_iters: Maximum number of outer iterations.
        tol_param: Parameter-change stopping tolerance.
        tol_obj: Relative objective change counted as stalled.
        obj_patience: Consecutive stalled iterations that stop the run.
        gap_tol: Relative tolerance under which eigenvalues count as tied.
        seed: Seed for every randomized step of the fit.
        record_embeddings: Leading iterations whose embeddings are kept.
        debug: Validate the loss gradient by finite differences first.
    """

    k: int = 5
    lam_c: float = 1.0
    lam_graph: float = 1.0
    lam_g: float = 0.1
    lam_p: float = 1.0
    C: Optional[float] = None
    safety: float = 1.01
    lipschitz: str = "bound"
    loss: str = "auc"
    init: str = "ridge"
    max_iters: int = 300
    tol_param: float = 1e-6
    tol_obj: float = 1e-8
    obj_patience: int = 5
    gap_tol: float = 1e-8
    seed: int = 0
    record_embeddings: int = 0
    debug: bool = False


@dataclass
class SimulatedSpec:
    """Synthetic block-structured multi-task data.

    Attributes:
        users: Number of tasks T.
        features: Number of features d.
        samples_per_user: Instances n per user.
        blocks: ``[feature_rows, task_cols]`` for each diagonal block.
        centroid_ranges: Upper end K_i of the uniform centroid draw per block.
        block_sd: Standard deviation of block entries around the centroid.
        score_sd: Standard deviation of the additive score noise.
        positives_per_user: Top-scored instances labeled +1 per user.
        seed: Generator seed.
    """

    users: int = 100
    features: int = 80
    samples_per_user: int = 200
    blocks: List[List[int]] = field(
        default_factory=lambda: [[20, 20], [20, 20], [10, 20], [20, 20], [10, 20]]
    )
    centroid_ranges: List[float] = field(default_factory=lambda: [5.0, 5.0, 10.0, 15.0, 20.0])
    block_sd: float = 2.5
    score_sd: float = 0.1
    positives_per_user: int = 50
    seed: int = 0


@dataclass
class ExperimentConfig:
    """Experiment identification.

    Attributes:
        name: Free-form experiment name, echoed in reports.
    """

    name: str = "tfcl-experiment"


@dataclass
class DataConfig:
    """Dataset locations and pre-processing.

    Attributes:
        path: Dataset CSV used by ``fit``/``eval`` when --data is not given.
        ground_truth: Ground-truth JSON used by ``recover``.
        min_minority: Drop users with fewer minority-class rows (0 keeps all).
    """

    path: str = ""
    ground_truth: str = ""
    min_minority: int = 0


@dataclass
class SplitConfig:
    """Per-user stratified train/validation/test split.

    Attributes:
        train: Training fraction.
        val: Validation fraction.
        test: Test fraction.
        seed: Shuffle seed.
    """

    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    seed: int = 0


@dataclass
class ModelConfig:
    """Which model ``fit`` trains.

    Attributes:
        kind: "base" (problem with a single W) or "personalized".
        base_loss: Loss used by the base model ("squared" or "auc").
    """

    kind: str = "base"
    base_loss: str = "squared"


@dataclass
class GridConfig:
    """Hyperparameter grid tuned on the validation split.

    Attributes:
        enabled: Whether ``fit`` runs the grid before the final fit.
        params: Field name of the active model config mapped to candidates.
    """

    enabled: bool = False
    params: Dict[str, List[float]] = field(default_factory=dict)


@dataclass
class EvalConfig:
    """Evaluation and recovery settings.

    Attributes:
        model_dir: Directory written by ``fit``.
        threshold: Support threshold; None uses 1e-8 * max|W|.
    """

    model_dir: str = ""
    threshold: Optional[float] = None


@dataclass
class BenchmarkConfig:
    """Repeated simulated benchmark.

    Attributes:
        repetitions: Number of generated datasets (seed, seed+1, ...).
        variants: Models compared ("auc", "squared", "lasso").
        lasso_grid: Candidate l1 weights of the independent baseline.
    """

    repetitions: int = 15
    variants: List[str] = field(default_factory=lambda: ["auc", "squared", "lasso"])
    lasso_grid: List[float] = field(default_factory=lambda: [0.1, 1.0, 10.0])


@dataclass
class OutputConfig:
    """Output settings.

    Attributes:
        out_dir: Default output directory when --out is not given.
        markdown: Also write Markdown renderings of the JSON reports.
    """

    out_dir: str = "tfcl-out"
    markdown: bool = False


@dataclass
class LoggingConfig:
    """Logging configuration.

    Attributes:
        level: Logging level ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL").
        format: Log format ("simple", "detailed", "json").
        file: Path to a log file; empty disables file logging.
        console: Whether to output logs to the console.
    """

    level: str = "INFO"
    format: str = "detailed"
    file: str = ""
    console: bool = True


@dataclass
class ProgressConfig:
    """Progress bar configuration.

    Attributes:
        enabled: Whether progress bars are shown.
    """

    enabled: bool = True


@dataclass
class RunConfig:
    """Top-level run configuration, one section per dataclass above."""

    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    simulation: SimulatedSpec = field(default_factory=SimulatedSpec)
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    base: TFCLConfig = field(default_factory=TFCLConfig)
    personalized: QConfig = field(default_factory=QConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    progress: ProgressConfig = field(default_factory=ProgressConfig)


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(RunConfig)}  # type: ignore[misc]


def load_config(config_path: Union[str, Path]) -> RunConfig:
    """Load and validate a run configuration.

    Args:
        config_path: Path to a ``.json``, ``.yaml``/``.yml`` or ``.toml`` file.

    Returns:
        RunConfig: Parsed and validated configuration.

    Raises:
        ConfigError: If the file cannot be found, read or parsed.
        ValidationError: If a key is unknown or a value is invalid.
    """
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"Configuration file not found: {config_path}")

    try:
        with open(config_path, encoding="utf-8") as f:
            if config_path.suffix == ".json":
                data = json.load(f)
            elif config_path.suffix in (".yaml", ".yml"):
                data = yaml.safe_load(f)
            elif config_path.suffix == ".toml":
                data = toml.load(f)
            else:
                raise ConfigError(f"Unsupported configuration file format: {config_path.suffix}")
    except (json.JSONDecodeError, yaml.YAMLError, toml.TomlDecodeError) as e:
        raise ConfigError(f"Failed to parse configuration file: {e}") from e
    except OSError as e:
        raise ConfigError(f"Failed to read configuration file: {e}") from e

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError("Configuration root must be a mapping of sections")

    try:
        config = parse_config(data)
        validate_config(config)
    except TypeError as e:
        raise ValidationError(f"Invalid configuration: {e}") from e

    return config


def parse_config(data: Dict[str, Any]) -> RunConfig:
    """Build a RunConfig from a plain mapping, rejecting unknown keys.

    Args:
        data: Mapping of section name to section mapping.

    Returns:
        RunConfig: Parsed (not yet validated) configuration.

    Raises:
        ValidationError: If a section or key is unknown.
    """
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ValidationError(
            f"Unknown configuration section(s): {', '.join(unknown)}. "
            f"Must be one of: {', '.join(_SECTIONS)}"
        )

    sections = {}
    for name, factory in _SECTIONS.items():
        sections[name] = _parse_section(type(factory()), data.get(name), name)
    return RunConfig(**sections)


def _parse_section(cls: type, data: Optional[Dict[str, Any]], section: str) -> Any:
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ValidationError(f"Section '{section}' must be a mapping")

    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"Unknown key(s) in section '{section}': {', '.join(unknown)}")
    return cls(**data)


def config_to_dict(config: Any) -> Dict[str, Any]:
    """Convert a (nested) config dataclass to plain dicts and lists."""
    return dataclasses.asdict(config)


def save_config(config: RunConfig, config_path: Union[str, Path]) -> None:
    """Save a configuration as JSON, YAML or TOML.

    Args:
        config: Configuration object to save.
        config_path: Destination; the suffix selects the format.

    Raises:
        ConfigError: If the file cannot be written or the format is unknown.
    """
    config_path = Path(config_path)

    try:
        config_path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"Failed to create configuration directory: {e}") from e

    data = config_to_dict(config)

    try:
        with open(config_path, "w", encoding="utf-8") as f:
            if config_path.suffix == ".json":
                json.dump(data, f, indent=2, sort_keys=True)
                f.write("\n")
            elif config_path.suffix in (".yaml", ".yml"):
                yaml.dump(data, f, default_flow_style=False, sort_keys=False)
            elif config_path.suffix == ".toml":
                # TOML has no null; absent keys load back as None defaults.
                toml.dump(_drop_none(data), f)
            else:
                raise ConfigError(f"Unsupported configuration file format: {config_path.suffix}")
    except (TypeError, yaml.YAMLError) as e:
        raise ConfigError(f"Failed to serialize configuration: {e}") from e
    except OSError as e:
        raise ConfigError(f"Failed to write configuration file: {e}") from e


def _drop_none(data: Dict[str, Any]) -> Dict[str, Any]:
    return {
        key: _drop_none(value) if isinstance(value, dict) else value
        for key, value in data.items()
        if value is not None
    }


def apply_seed(config: RunConfig, seed: int) -> RunConfig:
    """Return a copy of ``config`` with every seed field set to ``seed``.

    Args:
        config: Configuration to copy.
        seed: Non-negative seed from the command line.

    Returns:
        RunConfig: Updated copy.
    """
    if seed < 0:
        raise ValidationError(f"Invalid seed: {seed}. Must be non-negative")
    return dataclasses.replace(
        config,
        simulation=dataclasses.replace(config.simulation, seed=seed),
        split=dataclasses.replace(config.split, seed=seed),
        base=dataclasses.replace(config.base, seed=seed),
        personalized=dataclasses.replace(config.personalized, seed=seed),
    )


def _one_of(value: str, valid: List[str], what: str) -> None:
    if value not in valid:
        raise ValidationError(f"Invalid {what}: {value}. Must be one of: {', '.join(valid)}")


def _check_stopping(cfg: Union[TFCLConfig, QConfig], section: str) -> None:
    if not isinstance(cfg.k, int) or isinstance(cfg.k, bool) or cfg.k < 1:
        raise ValidationError(f"{section}.k must be an integer >= 1, got {cfg.k!r}")
    if cfg.C is not None and not cfg.C > 0:
        raise ValidationError(f"{section}.C must be positive when given, got {cfg.C}")
    if not cfg.safety > 1.0:
        raise ValidationError(f"{section}.safety must be greater than 1, got {cfg.safety}")
    if cfg.max_iters < 1:
        raise ValidationError(f"{section}.max_iters must be at least 1")
    for name in ("tol_param", "tol_obj", "gap_tol"):
        if not getattr(cfg, name) > 0:
            raise ValidationError(f"{section}.{name} must be positive")
    if cfg.obj_patience < 1:
        raise ValidationError(f"{section}.obj_patience must be at least 1")
    if cfg.seed < 0:
        raise ValidationError(f"{section}.seed must be non-negative")
    if cfg.record_embeddings < 0:
        raise ValidationError(f"{section}.record_embeddings cannot be negative")


def validate_tfcl_config(cfg: TFCLConfig) -> None:
    """Validate base-solver settings.

    Raises:
        ValidationError: If a field is out of range.
    """
    _check_stopping(cfg, "base")
    if cfg.alpha1 < 0 or cfg.alpha2 < 0:
        raise ValidationError("base.alpha1 and base.alpha2 cannot be negative")


def validate_qconfig(cfg: QConfig) -> None:
    """Validate personalized-solver settings.

    Raises:
        ValidationError: If a field is out of range.
    """
    _check_stopping(cfg, "personalized")
    for name in ("lam_c", "lam_graph", "lam_g", "lam_p"):
        if getattr(cfg, name) < 0:
            raise ValidationError(f"personalized.{name} cannot be negative")
    _one_of(cfg.lipschitz, ["bound", "exact"], "Lipschitz mode")
    _one_of(cfg.loss, ["auc", "squared"], "personalized loss")
    _one_of(cfg.init, ["ridge", "zero"], "initialization")


def validate_simulated_spec(spec: SimulatedSpec) -> None:
    """Validate the synthetic data specification.

    Raises:
        ValidationError: If sizes are inconsistent.
    """
    if spec.users < 1 or spec.features < 1 or spec.samples_per_user < 1:
        raise ValidationError("simulation.users, features and samples_per_user must be >= 1")
    if not spec.blocks:
        raise ValidationError("simulation.blocks cannot be empty")
    if len(spec.blocks) != len(spec.centroid_ranges):
        raise ValidationError(
            f"simulation.centroid_ranges has {len(spec.centroid_ranges)} entries "
            f"for {len(spec.blocks)} blocks"
        )
    for block in spec.blocks:
        if len(block) != 2 or min(block) < 1:
            raise ValidationError(f"Invalid block {block}: expected [feature_rows, task_cols] >= 1")
    if sum(block[0] for block in spec.blocks) != spec.features:
        raise ValidationError("Block feature rows must sum to simulation.features")
    if sum(block[1] for block in spec.blocks) != spec.users:
        raise ValidationError("Block task columns must sum to simulation.users")
    if any(k < 0 for k in spec.centroid_ranges):
        raise ValidationError("simulation.centroid_ranges cannot be negative")
    if spec.block_sd < 0 or spec.score_sd < 0:
        raise ValidationError("simulation noise standard deviations cannot be negative")
    if not 1 <= spec.positives_per_user < spec.samples_per_user:
        raise ValidationError(
            "simulation.positives_per_user must satisfy 1 <= positives < samples_per_user"
        )
    if spec.seed < 0:
        raise ValidationError("simulation.seed must be non-negative")


def validate_split(split: SplitConfig) -> None:
    """Validate split fractions.

    Raises:
        ValidationError: If fractions are negative or do not sum to 1.
    """
    fractions = (split.train, split.val, split.test)
    if min(fractions) < 0 or split.train <= 0:
        raise ValidationError(f"Invalid split fractions {fractions}: train must be > 0")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"Split fractions must sum to 1, got {sum(fractions)}")


def validate_config(config: RunConfig) -> bool:
    """Validate a complete run configuration.

    Args:
        config: Configuration object to validate.

    Returns:
        bool: True if configuration is valid.

    Raises:
        ValidationError: If configuration is invalid.
    """
    validate_tfcl_config(config.base)
    validate_qconfig(config.personalized)
    validate_simulated_spec(config.simulation)
    validate_split(config.split)

    if config.data.min_minority < 0:
        raise ValidationError("data.min_minority cannot be negative")

    _one_of(config.model.kind, ["base", "personalized"], "model kind")
    _one_of(config.model.base_loss, ["squared", "auc"], "base loss")

    active = config.base if config.model.kind == "base" else config.personalized
    tunable = {
        f.name
        for f in dataclasses.fields(active)
        if f.name not in ("seed", "debug", "lipschitz", "loss", "init", "record_embeddings")
    }
    for name, values in config.grid.params.items():
        if name not in tunable:
            raise ValidationError(
                f"Invalid grid parameter: {name}. Must be one of: {', '.join(sorted(tunable))}"
            )
        if not isinstance(values, list) or not values:
            raise ValidationError(f"Grid parameter {name} needs a non-empty list of values")

        if name in INTEGER_GRID_FIELDS and not all(_is_integral(v) for v in values):
            raise ValidationError(f"Grid parameter {name} needs integer values, got {values}")

    if config.evaluation.threshold is not None and config.evaluation.threshold < 0:
        raise ValidationError("evaluation.threshold cannot be negative")

    if config.benchmark.repetitions < 1:
        raise ValidationError("benchmark.repetitions must be at least 1")
    for variant in config.benchmark.variants:
        _one_of(variant, ["auc", "squared", "lasso"], "benchmark variant")
    if not config.benchmark.lasso_grid or min(config.benchmark.lasso_grid) < 0:
        raise ValidationError("benchmark.lasso_grid must hold non-negative values")

    _one_of(
        config.logging.level, ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], "logging level"
    )
    _one_of(config.logging.format, ["simple", "detailed", "json"], "logging format")

    return True
