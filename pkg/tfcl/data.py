"""Datasets: synthetic generation, CSV ingestion, filtering and splitting.

Dataset CSV schema (UTF-8, header row)::

    user_id,label,f_0,f_1,...,f_{d-1}

``label`` is -1 or 1. Users keep the order of their first appearance.
Ground truth of a synthetic dataset is a JSON document next to a CSV of
the d x T matrix W*.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from tfcl.bipartite import connected_components
from tfcl.config import SimulatedSpec, SplitConfig, validate_simulated_spec, validate_split
from tfcl.exceptions import DatasetError, ValidationError
from tfcl.logger import get_logger
from tfcl.losses import MultiTaskDataset
from tfcl.reports import read_matrix_csv, write_matrix_csv

logger = get_logger(__name__)

USER_COLUMN = "user_id"
LABEL_COLUMN = "label"
FEATURE_PREFIX = "f_"
DEFAULT_MIN_MINORITY = 8


@dataclass(eq=False)
class GroundTruth:
    """True weights and block memberships of a synthetic dataset.

    Attributes:
        W_star: d x T matrix whose support is exactly the block pattern.
        feature_labels: Block index of every feature.
        task_labels: Block index of every task.
    """

    W_star: np.ndarray
    feature_labels: np.ndarray
    task_labels: np.ndarray
    blocks: List[Dict[str, List[int]]] = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.W_star.shape[0]

    @property
    def T(self) -> int:
        return self.W_star.shape[1]

    def group_sizes(self) -> List[int]:
        """Node count (features + tasks) of each block, largest first."""
        return sorted(
            (len(block["features"]) + len(block["tasks"]) for block in self.blocks), reverse=True
        )

    def save(self, path: Union[str, Path], matrix_name: str = "w_star.csv") -> Path:
        """Write the JSON document and the W* CSV beside it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(self.W_star, path.parent / matrix_name)
        document = {
            "d": self.d,
            "T": self.T,
            "blocks": self.blocks,
            "w_star_path": matrix_name,
        }
        path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GroundTruth":
        """Read a ground-truth JSON document and its matrix.

        Raises:
            DatasetError: If the document or matrix is malformed.
        """
        path = Path(path)
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
            d, T, blocks = int(document["d"]), int(document["T"]), document["blocks"]
            matrix_path = path.parent / document["w_star_path"]
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise DatasetError(f"Invalid ground-truth file {path}: {e}") from e

        W_star = read_matrix_csv(matrix_path)
        if W_star.shape != (d, T):
            raise DatasetError(f"W* in {matrix_path} has shape {W_star.shape}, expected ({d}, {T})")

        feature_labels = np.full(d, -1, dtype=np.int64)
        task_labels = np.full(T, -1, dtype=np.int64)
        for index, block in enumerate(blocks):
            feature_labels[block["features"]] = index
            task_labels[block["tasks"]] = index
        return cls(W_star, feature_labels, task_labels, blocks)


def generate_simulated(spec: SimulatedSpec) -> Tuple[MultiTaskDataset, GroundTruth]:
    """Block-structured synthetic dataset.

    Blocks sit on the diagonal of W*. Block b draws a centroid
    ``C_b ~ U(0, K_b)`` and fills its entries from ``N(C_b, block_sd^2)``.
    Each user draws ``X ~ N(0, I)`` rows, scores them with
    ``X W*_i + N(0, score_sd^2)`` and labels the top ``positives_per_user``
    scores +1 and the rest -1.

    Raises:
        ValidationError: If the spec is inconsistent.
    """
    validate_simulated_spec(spec)
    rng = np.random.default_rng(spec.seed)
    d, T, n = spec.features, spec.users, spec.samples_per_user

    W_star = np.zeros((d, T))
    feature_labels = np.zeros(d, dtype=np.int64)
    task_labels = np.zeros(T, dtype=np.int64)
    blocks: List[Dict[str, List[int]]] = []
    row, col = 0, 0
    for index, ((rows, cols), K) in enumerate(zip(spec.blocks, spec.centroid_ranges)):
        centroid = rng.uniform(0.0, K)
        entries = rng.normal(centroid, spec.block_sd, (rows, cols))
        W_star[row : row + rows, col : col + cols] = entries
        feature_labels[row : row + rows] = index
        task_labels[col : col + cols] = index
        blocks.append(
            {"features": list(range(row, row + rows)), "tasks": list(range(col, col + cols))}
        )
        row, col = row + rows, col + cols

    X_list, y_list = [], []
    for i in range(T):
        X = rng.standard_normal((n, d))
        scores = X @ W_star[:, i] + rng.normal(0.0, spec.score_sd, n)
        labels = -np.ones(n)
        labels[np.argsort(-scores, kind="stable")[: spec.positives_per_user]] = 1.0
        X_list.append(X)
        y_list.append(labels)

    data = MultiTaskDataset(
        X=tuple(X_list), y=tuple(y_list), task_ids=tuple(f"user_{i}" for i in range(T))
    )
    logger.info(f"Generated simulated dataset: T={T}, d={d}, n={n}, blocks={len(spec.blocks)}")
    return data, GroundTruth(W_star, feature_labels, task_labels, blocks)


def save_dataset(data: MultiTaskDataset, path: Union[str, Path]) -> Path:
    """Write a dataset in the CSV schema with full-precision floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f"{FEATURE_PREFIX}{j}" for j in range(data.d)]
    frames = []
    for task_id, X, y in zip(data.task_ids, data.X, data.y):
        frame = pd.DataFrame(X, columns=columns)
        frame.insert(0, LABEL_COLUMN, y.astype(np.int64) if np.all(y == np.round(y)) else y)
        frame.insert(0, USER_COLUMN, task_id)
        frames.append(frame)
    pd.concat(frames, ignore_index=True).to_csv(
        path, index=False, float_format="%.17g", lineterminator="\r\n"
    )
    return path


def _bad_lines(mask: np.ndarray) -> str:
    # Header is line 1, so row r of the frame is line r + 2.
    lines = (np.flatnonzero(mask) + 2).tolist()
    shown = ", ".join(str(line) for line in lines[:10])
    return shown + (f" (+{len(lines) - 10} more)" if len(lines) > 10 else "")


def load_dataset(path: Union[str, Path]) -> MultiTaskDataset:
    """Read a dataset CSV.

    Raises:
        DatasetError: Empty file, unknown or missing columns, malformed rows
            (reported with line numbers) or labels outside {-1, 1}.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(
            path, dtype={USER_COLUMN: str}, keep_default_na=False, float_precision="round_trip"
        )
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"Dataset file is empty: {path}") from e
    except pd.errors.ParserError as e:
        raise DatasetError(f"Malformed dataset file {path}: {e}") from e
    except OSError as e:
        raise DatasetError(f"Failed to read dataset file {path}: {e}") from e

    if frame.empty:
        raise DatasetError(f"Dataset file has no rows: {path}")

    columns = list(frame.columns)
    if columns[:2] != [USER_COLUMN, LABEL_COLUMN]:
        raise DatasetError(f"Dataset must start with columns {USER_COLUMN},{LABEL_COLUMN}")
    features = columns[2:]
    expected = [f"{FEATURE_PREFIX}{j}" for j in range(len(features))]
    if not features or features != expected:
        unknown = [c for c in features if c not in expected] or features
        raise DatasetError(f"Unknown or misordered feature columns: {', '.join(map(str, unknown))}")

    numeric = frame[[LABEL_COLUMN] + features].apply(pd.to_numeric, errors="coerce")
    malformed = numeric.isna().any(axis=1).to_numpy() | (frame[USER_COLUMN] == "").to_numpy()
    if malformed.any():
        raise DatasetError(f"Malformed rows at line(s) {_bad_lines(malformed)} in {path}")

    labels = numeric[LABEL_COLUMN].to_numpy(dtype=np.float64)
    bad_labels = ~np.isin(labels, (-1.0, 1.0))
    if bad_labels.any():
        raise DatasetError(f"Labels must be -1 or 1 at line(s) {_bad_lines(bad_labels)}")

    values = numeric[features].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad_rows = ~np.isfinite(values).all(axis=1)
        raise DatasetError(f"Non-finite features at line(s) {_bad_lines(bad_rows)}")

    users = pd.unique(frame[USER_COLUMN])
    groups = frame.groupby(USER_COLUMN, sort=False).indices
    X = tuple(values[groups[u]] for u in users)
    y = tuple(labels[groups[u]] for u in users)
    data = MultiTaskDataset(X=X, y=y, task_ids=tuple(users))

    single_class = [u for u, p, q in zip(users, data.n_pos, data.n_neg) if p == 0 or q == 0]
    if single_class:
        logger.warning(
            f"{len(single_class)} user(s) have a single class: {', '.join(single_class[:5])}"
        )
    logger.info(f"Loaded dataset {path}: T={data.T}, d={data.d}, rows={int(data.n.sum())}")
    return data


def filter_min_minority(data: MultiTaskDataset, m: int = DEFAULT_MIN_MINORITY) -> MultiTaskDataset:
    """Drop users with fewer than ``m`` rows in their minority class.

    Raises:
        ValidationError: If m is negative.
        DatasetError: If no user survives.
    """
    if m < 0:
        raise ValidationError(f"m must be >= 0, got {m}")
    minority = np.minimum(data.n_pos, data.n_neg)
    keep = [i for i in range(data.T) if minority[i] >= m]
    if not keep:
        raise DatasetError(f"No user has at least {m} rows of its minority class")
    if len(keep) < data.T:
        logger.info(f"Minority filter (m={m}) kept {len(keep)} of {data.T} users")
    return data.select_tasks(keep)


def _class_counts(n: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    """Split n rows of one class; train keeps at least one row when n >= 1."""
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n >= 1:
        n_train = max(n_train, 1)
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def split(
    data: MultiTaskDataset,
    fractions: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> Tuple[MultiTaskDataset, MultiTaskDataset, MultiTaskDataset]:
    """Per-user stratified train/validation/test split.

    Each class of each user is shuffled with a seeded generator and cut by
    the fractions. Every class a user has appears in its training part.
    All three parts keep every user in the same order; a part may hold zero
    rows for a user.

    Raises:
        ValidationError: If the fractions are invalid.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ValidationError(f"Expected three fractions, got {len(fractions)}")
    validate_split(SplitConfig(train=fractions[0], val=fractions[1], test=fractions[2]))

    rng = np.random.default_rng(seed)
    parts: List[Dict[str, List[np.ndarray]]] = [{"X": [], "y": []} for _ in range(3)]
    for X, y in zip(data.X, data.y):
        indices: List[List[np.ndarray]] = [[], [], []]
        for value in np.unique(y):
            rows = rng.permutation(np.flatnonzero(y == value))
            counts = _class_counts(rows.size, fractions)
            bounds = np.cumsum((0,) + counts)
            for part in range(3):
                indices[part].append(rows[bounds[part] : bounds[part + 1]])
        for part in range(3):
            chosen = np.sort(np.concatenate(indices[part])) if indices[part] else np.array([], int)
            parts[part]["X"].append(X[chosen])
            parts[part]["y"].append(y[chosen])

    train, val, test = (
        MultiTaskDataset(X=tuple(p["X"]), y=tuple(p["y"]), task_ids=data.task_ids) for p in parts
    )
    return train, val, test


def dataset_summary(data: MultiTaskDataset) -> Dict[str, Any]:
    """Counts used in provenance records and reports."""
    return {
        "users": data.T,
        "features": data.d,
        "rows": int(data.n.sum()),
        "positives": int(data.n_pos.sum()),
        "negatives": int(data.n_neg.sum()),
    }


def check_ground_truth(gt: GroundTruth) -> int:
    """Number of connected components of W* at threshold 0."""
    return connected_components(gt.W_star, 0.0).count
