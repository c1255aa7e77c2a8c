"""Lightweight depth-guided polyp segmentation at desk scale.

A numpy reverse-mode autodiff core, a ghost-factorized dual-stream
decoder with shuffle fusion and group gating, a deterministic degradation
synthesis pipeline, and the four-quadrant robustness protocol, wrapped in
an sklearn-style estimator and a CLI.
"""

from .autodiff import Tensor, backward, grad_check, no_grad, tally_macs
from .blocks import DynamicGroupGating, GhostFactorization, InterleavedShuffleFusion
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .config import DataConfig, RunConfig, config_hash, load_config
from .data import Sample, load_dataset, save_dataset, synth_dataset, synth_sample
from .degrade import DegradationSpec, degrade_sample, replay_events
from .errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    DepthPolypError,
    DimensionError,
    TrainingError,
    UsageError,
)
from .estimator import DegradationTransformer, PolypSegmenter
from .losses import dice_loss, depth_loss, joint_loss, model_loss
from .metrics import MetricReport, binary_metrics, score_predictions
from .network import (
    DepthPolypNet,
    NetworkConfig,
    mac_table,
    parameter_summary,
    parameter_table,
    total_macs,
)
from .optim import AdamW, WarmupCosine
from .quadrant import QuadrantReport, quadrant_deltas, quadrant_eval
from .rng import KeyedRng
from .train import TrainConfig, bench_fps, evaluate, predict, train_model

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "CheckpointError",
    "ConfigurationError",
    "DataConfig",
    "DataError",
    "DegradationSpec",
    "DegradationTransformer",
    "DepthPolypError",
    "DepthPolypNet",
    "DimensionError",
    "DynamicGroupGating",
    "GhostFactorization",
    "InterleavedShuffleFusion",
    "KeyedRng",
    "MetricReport",
    "NetworkConfig",
    "PolypSegmenter",
    "QuadrantReport",
    "RunConfig",
    "Sample",
    "Tensor",
    "TrainConfig",
    "TrainingError",
    "UsageError",
    "WarmupCosine",
    "backward",
    "bench_fps",
    "binary_metrics",
    "config_hash",
    "degrade_sample",
    "depth_loss",
    "dice_loss",
    "evaluate",
    "grad_check",
    "joint_loss",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "mac_table",
    "model_loss",
    "no_grad",
    "parameter_summary",
    "parameter_table",
    "predict",
    "quadrant_deltas",
    "quadrant_eval",
    "read_checkpoint",
    "replay_events",
    "save_checkpoint",
    "save_dataset",
    "score_predictions",
    "synth_dataset",
    "synth_sample",
    "tally_macs",
    "total_macs",
    "train_model",
]
