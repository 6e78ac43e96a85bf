"""Minimal dense tensor library with reverse-mode autodiff."""
from .ops import conv2d, conv_transpose2d, lstm
from .optim import DEFAULT_LR, AdamState, NonFiniteGradient, adam_step, clip_grad_norm
from .tensor import (
    ShapeError,
    Tensor,
    add,
    as_tensor,
    concat,
    cumsum,
    default_dtype,
    div,
    erf,
    exp,
    get_default_dtype,
    getitem,
    grad_enabled,
    log,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    pad,
    parameter,
    power,
    prelu,
    reshape,
    sigmoid,
    sqrt,
    stack,
    sub,
    tanh,
    transpose,
    tsum,
    var,
)

__all__ = [name for name in dir() if not name.startswith("_")]
