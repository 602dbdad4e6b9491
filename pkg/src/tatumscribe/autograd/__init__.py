"""Minimal float64 tensor engine with reverse-mode differentiation."""
from .functional import conv2d, gru_layer, gru_recurrence, window_max
from .optim import AdamW, AdamWConfig
from .tensor import (Tensor, as_tensor, backward, clip, concat, dropout, exp, log,
                     matmul, mean, relu, reshape, sigmoid, softplus, stack, tanh, tape, transpose,
                     tsum, zero_grad)

__all__ = [
    "AdamW", "AdamWConfig", "Tensor", "as_tensor", "backward", "clip", "concat",
    "conv2d", "dropout", "exp", "gru_layer", "gru_recurrence", "log", "matmul",
    "mean", "relu", "reshape", "sigmoid", "softplus", "stack", "tanh", "tape", "transpose",
    "tsum", "window_max", "zero_grad",
]
