"""Early at-risk student prediction by distilling a full-course RNN-Attention teacher into a truncated-sequence student."""

from .distill import DistillConfig, TrainConfig, TrainedPair, ablation_variants, distill_student, train_teacher
from .evaluation import confusion, metrics
from .kernels import BACKEND
from .model import ModelConfig, ModelParams, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DistillConfig",
    "ModelConfig",
    "ModelParams",
    "TrainConfig",
    "TrainedPair",
    "ablation_variants",
    "confusion",
    "distill_student",
    "load_checkpoint",
    "metrics",
    "save_checkpoint",
    "train_teacher",
]
