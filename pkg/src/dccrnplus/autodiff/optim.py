"""Adam with bias correction and global-norm clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LR = 1e-3


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}; step aborted")
        self.name = name


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = DEFAULT_LR,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Update ``params`` (name -> array or Tensor) in place.

    Every gradient is checked before anything is modified, so a NaN leaves
    parameters and moments untouched.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        arr = p if isinstance(p, np.ndarray) else p.data
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        arr -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(arr.dtype)


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values() if g is not None)))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads.values():
            if g is not None:
                g *= scale
    return total
