"""Tensor arithmetic, reverse-mode autodiff, Adam and seeded RNG streams."""

from .autodiff import (
    GradcheckResult,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    clip,
    concat,
    diagonal,
    exp,
    gradcheck,
    leaky_relu,
    log,
    log_sigmoid,
    logsumexp,
    matmul,
    mean,
    mul,
    parameter,
    power,
    relu,
    reshape,
    scale,
    sigmoid,
    square,
    sub,
    take,
    tanh,
    transpose,
)
from .autodiff import sum as reduce_sum
from .optim import Adam, AdamState, NonFiniteGradientError, adam_step
from .rng import Rng, gaussian_sample

__all__ = [
    "Adam",
    "AdamState",
    "GradcheckResult",
    "NonFiniteGradientError",
    "Rng",
    "ShapeError",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "clip",
    "concat",
    "diagonal",
    "exp",
    "gaussian_sample",
    "gradcheck",
    "leaky_relu",
    "log",
    "log_sigmoid",
    "logsumexp",
    "matmul",
    "mean",
    "mul",
    "parameter",
    "power",
    "reduce_sum",
    "relu",
    "reshape",
    "scale",
    "sigmoid",
    "square",
    "sub",
    "take",
    "tanh",
    "transpose",
]
