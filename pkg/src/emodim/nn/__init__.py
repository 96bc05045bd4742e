"""Minimal differentiable layers, the three downstream architectures, and training.

Everything is plain numpy with hand-written backward passes, verified
against central finite differences (see grad_check).
"""

from .layers import (
    AvgPool1d,
    BatchNorm,
    Conv1d,
    GlobalAvgPool,
    LayerNorm,
    Linear,
    MaxPool1d,
    MultiHeadSelfAttention,
    Param,
    PositionalEncoding,
    ReLU,
    Sequential,
    TransformerEncoderBlock,
    softmax,
)
from .models import Model, ModelSpec, build_model, load_checkpoint, save_checkpoint
from .train import (
    TrainConfig,
    TrainingDiverged,
    cross_entropy,
    grad_check,
    mse,
    train,
)

__all__ = [
    "AvgPool1d", "BatchNorm", "Conv1d", "GlobalAvgPool", "LayerNorm", "Linear",
    "MaxPool1d", "MultiHeadSelfAttention", "Param", "PositionalEncoding", "ReLU",
    "Sequential", "TransformerEncoderBlock", "softmax",
    "Model", "ModelSpec", "build_model", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "TrainingDiverged", "cross_entropy", "grad_check", "mse", "train",
]
