"""Small synthetic problems shared by the tests."""

import numpy as np

from tfcl.data import GroundTruth
from tfcl.losses import MultiTaskDataset


def block_problem(seed=0, n=60, blocks=3, features_per_block=4, tasks_per_block=3):
    """Noiseless regression tasks whose true weights are exactly block diagonal.

    Returns:
        tuple: (MultiTaskDataset, GroundTruth).
    """
    generator = np.random.default_rng(seed)
    d, T = blocks * features_per_block, blocks * tasks_per_block
    W_star = np.zeros((d, T))
    feature_labels = np.repeat(np.arange(blocks), features_per_block)
    task_labels = np.repeat(np.arange(blocks), tasks_per_block)
    block_list = []
    for b in range(blocks):
        rows = slice(b * features_per_block, (b + 1) * features_per_block)
        cols = slice(b * tasks_per_block, (b + 1) * tasks_per_block)
        W_star[rows, cols] = generator.uniform(1.0, 2.0, (features_per_block, tasks_per_block))
        block_list.append(
            {
                "features": list(range(rows.start, rows.stop)),
                "tasks": list(range(cols.start, cols.stop)),
            }
        )
    X = tuple(generator.standard_normal((n, d)) for _ in range(T))
    y = tuple(x @ W_star[:, i] for i, x in enumerate(X))
    data = MultiTaskDataset(X=X, y=y)
    return data, GroundTruth(W_star, feature_labels, task_labels, block_list)


def classification_problem(seed=0, T=3, d=4, n=20, positives=None):
    """Small labeled tasks with both classes in every task."""
    generator = np.random.default_rng(seed)
    positives = positives if positives is not None else n // 2
    X_list, y_list = [], []
    for _ in range(T):
        X = generator.standard_normal((n, d))
        scores = X @ generator.standard_normal(d) + 0.5 * generator.standard_normal(n)
        labels = -np.ones(n)
        labels[np.argsort(-scores)[:positives]] = 1.0
        X_list.append(X)
        y_list.append(labels)
    return MultiTaskDataset(X=tuple(X_list), y=tuple(y_list))
