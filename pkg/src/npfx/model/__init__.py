"""Continuous-latent imputation model, objectives, training and serialization."""

from . import io
from .config import ModelConfig, TrainConfig
from .losses import mse_loss, shrinkage, shrinkage_loss, total_loss
from .network import DecodeOutput, ImputeResult, PrefixImputer
from .train import Adam, batch_loss, clip_by_norm, stack_windows, train, train_step

__all__ = [
    "ModelConfig", "TrainConfig", "PrefixImputer", "DecodeOutput", "ImputeResult",
    "shrinkage", "shrinkage_loss", "mse_loss", "total_loss", "Adam", "clip_by_norm", "batch_loss",
    "stack_windows", "train", "train_step", "io",
]
