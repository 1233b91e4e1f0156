"""Pytest configuration and fixtures for tfcl tests."""

from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pytest

from tests.factories import block_problem, classification_problem
from tfcl.config import SimulatedSpec


@pytest.fixture
def temp_dir():
    """Temporary directory for tests.

    Yields:
        Path: Path to temporary directory.
    """
    with TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def rng():
    """Seeded generator for test inputs."""
    return np.random.default_rng(12345)


@pytest.fixture
def block_data():
    """Exact 3-block noiseless regression problem (d = 12, T = 9)."""
    return block_problem(seed=0)


@pytest.fixture
def auc_data():
    """Three small binary tasks with both classes."""
    return classification_problem(seed=0)


@pytest.fixture
def tiny_spec():
    """Small two-block simulation spec."""
    return SimulatedSpec(
        users=6,
        features=6,
        samples_per_user=40,
        blocks=[[3, 3], [3, 3]],
        centroid_ranges=[5.0, 10.0],
        block_sd=1.0,
        score_sd=0.1,
        positives_per_user=15,
        seed=3,
    )


@pytest.fixture
def sample_json_config(temp_dir):
    """Sample JSON run configuration.

    Args:
        temp_dir: Temporary directory fixture.

    Returns:
        Path: Path to the configuration file.
    """
    config_path = temp_dir / "run.json"
    config_path.write_text(
        """{
  "experiment": {"name": "json-run"},
  "simulation": {
    "users": 6,
    "features": 6,
    "samples_per_user": 40,
    "blocks": [[3, 3], [3, 3]],
    "centroid_ranges": [5.0, 10.0],
    "positives_per_user": 15
  },
  "model": {"kind": "base", "base_loss": "squared"},
  "base": {"k": 2, "alpha1": 0.5, "alpha2": 0.01, "max_iters": 50},
  "logging": {"level": "WARNING", "format": "simple", "console": false},
  "progress": {"enabled": false}
}
""",
        encoding="utf-8",
    )
    return config_path


@pytest.fixture
def sample_yaml_config(temp_dir):
    """Sample YAML run configuration."""
    config_path = temp_dir / "run.yaml"
    config_path.write_text(
        """experiment:
  name: "yaml-run"
model:
  kind: "personalized"
personalized:
  k: 2
  lam_c: 0.5
  lam_p: 2.0
  loss: "auc"
grid:
  enabled: true
  params:
    lam_graph: [0.1, 1.0]
logging:
  level: "INFO"
  format: "detailed"
  console: true
""",
        encoding="utf-8",
    )
    return config_path


@pytest.fixture
def sample_toml_config(temp_dir):
    """Sample TOML run configuration."""
    config_path = temp_dir / "run.toml"
    config_path.write_text(
        """[experiment]
name = "toml-run"

[base]
k = 4
alpha1 = 2.0
C = 50.0

[split]
train = 0.6
val = 0.2
test = 0.2
seed = 7

[benchmark]
repetitions = 3
variants = ["auc", "lasso"]
""",
        encoding="utf-8",
    )
    return config_path
