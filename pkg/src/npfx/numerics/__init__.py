"""Tensor arithmetic with reverse-mode differentiation."""

from . import ops
from .gradcheck import analytic_gradient, grad_check, numerical_gradient
from .ops import (
    abs, add, bilinear_warp, concat, conv2d, div, exp, getitem, lincomb, log, mean,
    mul, neg, pixel_unshuffle, power, relu, reshape, sigmoid, stack, sub, sum, tanh,
    transpose, upsample_nearest,
)
from .tensor import (
    Gradients, ShapeError, Tape, TapeError, Tensor, as_tensor, backward,
    get_default_dtype, no_grad, precision,
)

__all__ = [
    "ops", "Tensor", "Tape", "Gradients", "ShapeError", "TapeError", "backward",
    "no_grad", "precision", "get_default_dtype", "as_tensor", "grad_check",
    "numerical_gradient", "analytic_gradient", "add", "sub", "mul", "div", "neg",
    "power", "exp", "log", "sigmoid", "tanh", "relu", "abs", "sum", "mean",
    "reshape", "transpose", "getitem", "concat", "stack", "lincomb", "conv2d",
    "upsample_nearest", "pixel_unshuffle", "bilinear_warp",
]
