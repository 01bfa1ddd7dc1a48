"""Minimal reverse-mode automatic differentiation over numpy arrays."""
from .check import grad_check
from .optim import AdamW, adamw_step, clip_grad_norm
from .tensor import (Tensor, add, concat, embedding_lookup, layer_norm, log, masked_mean,
                     matmul, mean, mul, no_grad, relu, reshape, row_softmax, scale, sigmoid,
                     slice_, softplus, sum_, transpose)

__all__ = [
    "Tensor", "no_grad", "grad_check", "AdamW", "adamw_step", "clip_grad_norm",
    "add", "mul", "scale", "matmul", "row_softmax", "log", "layer_norm", "embedding_lookup",
    "concat", "slice_", "masked_mean", "transpose", "reshape", "relu", "softplus",
    "sigmoid", "sum_", "mean",
]
