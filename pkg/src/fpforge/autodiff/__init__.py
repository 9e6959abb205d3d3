"""Minimal reverse-mode autodiff engine used by every trained network here."""

from .tensor import DEFAULT_DTYPE, Tape, Tensor, add, mul, neg, no_grad, scale, sub, tmean, tsum
from .functional import conv2d, global_avg_pool, grl, linear, relu, sigmoid, upsample_nearest2x
from .losses import CLAMP_EPS, bce, mse, softmax_ce
from .optim import Adam, AdamState, NonFiniteGradient, adam_step
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import CheckpointError, load_checkpoint, params_checksum, save_checkpoint

__all__ = [
    "DEFAULT_DTYPE", "Tape", "Tensor", "add", "mul", "neg", "no_grad", "scale", "sub",
    "tmean", "tsum", "conv2d", "global_avg_pool", "grl", "linear", "relu", "sigmoid",
    "upsample_nearest2x", "CLAMP_EPS", "bce", "mse", "softmax_ce", "Adam", "AdamState",
    "NonFiniteGradient", "adam_step", "GradCheckReport", "grad_check", "CheckpointError",
    "load_checkpoint", "params_checksum", "save_checkpoint",
]
