"""tfcl - Task-feature collaborative learning for multi-task models.

tfcl fits multi-task linear models whose task-feature bipartite graph is
driven toward k connected components:
- Build the task-feature Laplacian and solve the truncated-eigenvalue U-step
  in closed form
- Alternate U-updates with proximal gradient steps on the weights
- Fit the personalized consensus/group/personal model with a linear-time
  squared AUC loss
- Score structure recovery, grouping certificates and convergence
- Generate simulated data, run grid searches and benchmarks from the CLI
"""

__version__ = "0.1.0"
__license__ = "MIT"

# Public API exports
from tfcl.bipartite import (
    BipartiteLaplacian,
    Grouping,
    build_laplacian,
    connected_components,
    distance_matrix,
    embeddings,
)
from tfcl.config import (
    QConfig,
    RunConfig,
    SimulatedSpec,
    TFCLConfig,
    load_config,
    save_config,
    validate_config,
)
from tfcl.data import GroundTruth, generate_simulated, load_dataset, save_dataset, split
from tfcl.diagnostics import (
    ConvergenceReport,
    GroupingCertificate,
    RecoveryReport,
    convergence_report,
    grouping_certificate,
    recovery_report,
)
from tfcl.exceptions import (
    ConfigError,
    ConvergenceError,
    DatasetError,
    DegenerateInputError,
    SpectralError,
    TFCLError,
    ValidationError,
)
from tfcl.logger import get_logger, setup_logging
from tfcl.losses import AUCLoss, MultiTaskDataset, SquaredLoss, auc_metric, make_loss
from tfcl.personalized import PersonalizedParams, fit_personalized, lasso_baseline, predict
from tfcl.prox import ProxWeights, column_group_prox, l2_prox, w_prox
from tfcl.solver import FitHistory, fit, objective_P
from tfcl.spectral import SpectralSolution, sym_eig, truncated_eig_sum, u_update

__all__ = [
    # Version
    "__version__",
    # Graph
    "BipartiteLaplacian",
    "Grouping",
    "build_laplacian",
    "distance_matrix",
    "connected_components",
    "embeddings",
    # Spectral
    "SpectralSolution",
    "sym_eig",
    "truncated_eig_sum",
    "u_update",
    # Proximal operators
    "ProxWeights",
    "w_prox",
    "l2_prox",
    "column_group_prox",
    # Losses
    "MultiTaskDataset",
    "SquaredLoss",
    "AUCLoss",
    "make_loss",
    "auc_metric",
    # Solvers
    "FitHistory",
    "fit",
    "objective_P",
    "PersonalizedParams",
    "fit_personalized",
    "predict",
    "lasso_baseline",
    # Data
    "GroundTruth",
    "generate_simulated",
    "load_dataset",
    "save_dataset",
    "split",
    # Diagnostics
    "RecoveryReport",
    "GroupingCertificate",
    "ConvergenceReport",
    "recovery_report",
    "grouping_certificate",
    "convergence_report",
    # Config
    "TFCLConfig",
    "QConfig",
    "SimulatedSpec",
    "RunConfig",
    "load_config",
    "save_config",
    "validate_config",
    # Exceptions
    "TFCLError",
    "ConfigError",
    "ValidationError",
    "DegenerateInputError",
    "SpectralError",
    "DatasetError",
    "ConvergenceError",
    # Logger
    "setup_logging",
    "get_logger",
]
