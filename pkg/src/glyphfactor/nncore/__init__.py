"""Numpy neural primitives with hand-written backward passes."""

from .checkpoint import CheckpointError, load_checkpoint, load_state, module_state, save_checkpoint
from .functional import (
    ShapeError,
    blurpool2x2,
    conv3x3,
    fully_connected,
    instance_norm,
    relu,
    sigmoid,
    softplus,
    tconv2x2,
)
from .layers import (
    BlurPool2x2,
    Conv1x1,
    Conv3x3,
    Embedding,
    Flatten,
    InstanceNorm,
    Linear,
    Module,
    Param,
    ReLU,
    Reshape,
    Sequential,
    Sigmoid,
    TConv2x2,
)
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Adam", "AdamState", "BlurPool2x2", "CheckpointError", "Conv1x1", "Conv3x3", "Embedding",
    "Flatten", "InstanceNorm", "Linear", "Module", "Param", "ReLU", "Reshape", "Sequential",
    "ShapeError", "Sigmoid", "TConv2x2", "adam_step", "blurpool2x2", "conv3x3", "fully_connected",
    "instance_norm", "load_checkpoint", "load_state", "module_state", "relu", "save_checkpoint",
    "sigmoid", "softplus", "tconv2x2",
]
