"""Minimal reverse-mode autodiff over dense float64 numpy arrays."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, check_function, grad_check
from .ops import l1_loss, layer_norm, mse_loss, softmax, squared_norm
from .optim import OptimizerState, epoch_schedule, optimizer_step
from .tensor import (
    Tensor, absolute, add, as_tensor, backward, broadcast_to, concat, div, exp, gelu, getitem,
    log, matmul, mean, mul, no_grad, power, relu, reshape, sqrt, stack, sub, swapaxes, tanh,
    transpose, tsum, where,
)

__all__ = [
    "Tensor", "absolute", "add", "as_tensor", "backward", "broadcast_to", "concat", "div", "exp",
    "gelu", "getitem", "log", "matmul", "mean", "mul", "no_grad", "power", "relu", "reshape",
    "sqrt", "stack", "sub", "swapaxes", "tanh", "transpose", "tsum", "where", "softmax",
    "layer_norm", "mse_loss", "l1_loss", "squared_norm", "OptimizerState", "optimizer_step",
    "epoch_schedule", "grad_check", "check_function", "GradCheckReport", "save_checkpoint",
    "load_checkpoint",
]
