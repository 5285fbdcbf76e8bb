"""Evidential physics-informed neural networks for inverse PDE problems."""

__version__ = "0.1.0"

from .losses import LossWeights, Variant  # noqa: E402,F401
from .model import EvidentialNetwork, KappaPosterior, NetworkConfig, PlainNetwork  # noqa: F401
from .problems import (  # noqa: F401
    Dataset,
    DatasetCounts,
    generate_dataset,
    get_problem,
    make_problem_1d,
    make_problem_2d,
)
from .metrics import MetricsReport, ecp, evaluate_predictions, spearman  # noqa: F401
from .training import (  # noqa: F401
    TrainConfig,
    TrainResult,
    train_deep_ensemble,
    train_epinn,
)
