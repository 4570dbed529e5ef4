"""Desk-scale privacy auditing of machine unlearning.

Train small classifiers, unlearn a forget set by exact or approximate
methods, and measure how much membership information the pair of models
leaks about the retained data.
"""

from .attack import (
    AttackVerdict,
    ShadowStats,
    UnlearnSettings,
    baseline_conf,
    baseline_threshold,
    decide,
    fit_gaussians,
    likelihood_ratio,
    log_odds,
    run_shadow_pipeline,
    ucd,
)
from .config import ExperimentConfig
from .datasets import DatasetBundle, SplitSpec, TargetSet, gen_blobs, load_idx
from .gain import GainEstimate, delta_behavior, density_export, estimate_gain
from .influence import WoodFisherInverse, influence_report, influence_score
from .metrics import MetricsReport, balanced_accuracy, roc_auc, tpr_at_fpr
from .nn import Model, confidence, forward, init_model
from .training import TrainConfig, train
from .unlearning import (
    unlearn_gradient_ascent,
    unlearn_influence,
    unlearn_retrain,
    unlearn_salun,
)

__version__ = "0.1.0"

__all__ = [
    "AttackVerdict",
    "DatasetBundle",
    "ExperimentConfig",
    "GainEstimate",
    "MetricsReport",
    "Model",
    "ShadowStats",
    "SplitSpec",
    "TargetSet",
    "TrainConfig",
    "UnlearnSettings",
    "WoodFisherInverse",
    "balanced_accuracy",
    "baseline_conf",
    "baseline_threshold",
    "confidence",
    "decide",
    "delta_behavior",
    "density_export",
    "estimate_gain",
    "fit_gaussians",
    "forward",
    "gen_blobs",
    "influence_report",
    "influence_score",
    "init_model",
    "likelihood_ratio",
    "load_idx",
    "log_odds",
    "roc_auc",
    "run_shadow_pipeline",
    "tpr_at_fpr",
    "train",
    "ucd",
    "unlearn_gradient_ascent",
    "unlearn_influence",
    "unlearn_retrain",
    "unlearn_salun",
]
