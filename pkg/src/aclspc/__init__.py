"""Self-supervised point cloud completion through an adaptive closed loop.

A completion network maps a partial cloud to a full one. Training needs no
ground truth: the network's own completion is re-observed from random
viewpoints, and completions of those synthetic partials must agree with it.
"""
from .core import CloudError, SeededRng, as_cloud, resample
from .data import DataError, build_toy_dataset, load_manifest, read_cloud, write_cloud
from .loss import LossBreakdown, LossWeights, consistency_mse, weighted_chamfer
from .metrics import MetricsReport, evaluate_dataset
from .model import CheckpointError, ModelParams, forward_complete, init_params, load_params, save_params
from .train import TrainConfig, TrainResult, acl_forward, test_time_adapt, train
from .view import ViewParams, sample_view, synthesize_partial

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "CloudError", "DataError", "LossBreakdown", "LossWeights", "MetricsReport",
    "ModelParams", "SeededRng", "TrainConfig", "TrainResult", "ViewParams", "acl_forward",
    "as_cloud", "build_toy_dataset", "consistency_mse", "evaluate_dataset", "forward_complete",
    "init_params", "load_manifest", "load_params", "read_cloud", "resample", "sample_view",
    "save_params", "synthesize_partial", "test_time_adapt", "train", "weighted_chamfer",
    "write_cloud",
]
