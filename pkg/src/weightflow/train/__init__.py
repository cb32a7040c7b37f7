"""Two-stage training (anchors, then the hypernetwork flow), metrics and evaluation."""
from .anchors import AnchorSet, fit_backbone, pretrain_anchors
from .config import TrainConfig
from .dynamics import (HypernetResult, TimeMap, TrainingDiverged, build_hypernet, kinetic_energy,
                       path_energy, reconstruction_loss, score_term, train_hypernet)
from .evaluate import METRICS, MODES, EvalReport, evaluate, score_weights, weights_on_grid, write_reports
from .metrics import (median_bandwidth, metric_jsd, metric_mmd, metric_wasserstein, mmd2_unbiased,
                      wasserstein_1d)

__all__ = [
    "AnchorSet", "fit_backbone", "pretrain_anchors", "TrainConfig", "HypernetResult", "TimeMap",
    "TrainingDiverged", "build_hypernet", "kinetic_energy", "path_energy", "reconstruction_loss",
    "score_term", "train_hypernet", "METRICS", "MODES", "EvalReport", "evaluate", "score_weights",
    "weights_on_grid", "write_reports", "median_bandwidth", "metric_jsd", "metric_mmd",
    "metric_wasserstein", "mmd2_unbiased", "wasserstein_1d",
]
