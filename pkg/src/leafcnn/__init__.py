"""A from-scratch CNN for healthy/diseased tomato-leaf classification.

NumPy implementation of the conv/pool/dropout/dense stack, Adam training
with best-validation checkpointing, evaluation metrics, Grad-CAM and a
small prediction service.
"""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import ConfusionMatrix, MetricsReport, compute_metrics, confusion_matrix, evaluate_model
from .explain import grad_cam
from .model import ModelConfig, Sequential, custom_cnn_config
from .training import OptimizerConfig, TrainConfig, adam_step, fit

__all__ = [
    "ConfusionMatrix", "MetricsReport", "ModelConfig", "OptimizerConfig", "Sequential", "TrainConfig",
    "adam_step", "compute_metrics", "confusion_matrix", "custom_cnn_config", "evaluate_model", "fit",
    "grad_cam", "load_checkpoint", "save_checkpoint",
]
