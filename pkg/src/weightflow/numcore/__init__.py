"""Minimal dense-tensor engine with tape-based reverse-mode differentiation."""
from .fused import (attention_weights, axpy, blocks_linear, linear, lincomb,
                    multi_head_attention, segment_linear)
from .optim import Adam, ConfigError, adam_step
from .tensor import (NumericError, Param, ShapeError, Tape, Tensor, add, as_tensor, clamp,
                     concat, exp, getitem, glorot_uniform, layer_norm, log, logsumexp, matmul,
                     mean, mse, mul, neg, reshape, sigmoid, softmax, square, sub, sum, tanh,
                     transpose)

__all__ = [
    "attention_weights", "axpy", "blocks_linear", "linear", "lincomb", "multi_head_attention",
    "segment_linear",
    "Adam", "ConfigError", "adam_step", "NumericError", "Param", "ShapeError", "Tape", "Tensor",
    "add", "as_tensor", "clamp", "concat", "exp", "getitem", "glorot_uniform", "layer_norm",
    "log", "logsumexp", "matmul", "mean", "mse", "mul", "neg", "reshape", "sigmoid", "softmax",
    "square", "sub", "sum", "tanh", "transpose",
]
