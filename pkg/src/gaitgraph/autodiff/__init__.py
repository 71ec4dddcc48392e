"""Minimal numpy tensor engine with reverse-mode differentiation."""

from .gradcheck import GradCheckResult, grad_check, relative_error
from .ops import (ConfigError, batch_norm, conv_temporal, dropout, graph_conv, l2_normalize, linear,
                  mean_pool, scale)
from .tensor import (Tape, Tensor, add, as_tensor, concat, div, exp, grad_enabled, log, logsumexp, matmul,
                     mean, mul, no_grad, record_kinks, relu, reshape, sub, transpose, tsum)

__all__ = [
    "ConfigError", "GradCheckResult", "Tape", "Tensor", "add", "as_tensor", "batch_norm", "concat",
    "conv_temporal", "div", "dropout", "exp", "grad_check", "grad_enabled", "graph_conv", "l2_normalize",
    "linear", "log", "logsumexp", "matmul", "mean", "mean_pool", "mul", "no_grad", "relative_error",
    "record_kinks", "relu", "reshape", "scale", "sub", "transpose", "tsum",
]
