"""Central finite-difference gradient checking (use float64)."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5, index=None) -> np.ndarray:
    """d fn() / d param by central differences, for all entries or the flat ``index`` list."""
    flat = param.data.reshape(-1)
    idx = range(flat.size) if index is None else index
    out = np.zeros(flat.size, dtype=np.float64)
    with no_grad():
        for k in idx:
            orig = flat[k]
            flat[k] = orig + h
            fp = float(fn().data.sum())
            flat[k] = orig - h
            fm = float(fn().data.sum())
            flat[k] = orig
            out[k] = (fp - fm) / (2 * h)
    return out.reshape(param.shape)


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
                    max_entries: int | None = None, seed: int = 0, zero_tol: float = 0.0) -> list[float]:
    """Relative error between analytic and numerical gradients for each parameter.

    ``fn`` must rebuild the graph from ``params`` on every call and return a
    scalar (or a tensor whose sum is the objective).  With ``max_entries`` only
    a random subset of each parameter's entries is compared.  A parameter
    whose analytic and numerical gradients both stay below ``zero_tol`` in
    absolute value (e.g. a bias feeding straight into batch norm) scores 0.
    """
    for p in params:
        p.grad = None
    out = fn()
    out.backward(np.ones_like(out.data))
    rng = np.random.default_rng(seed)
    errors = []
    for p in params:
        analytic = np.zeros(p.shape) if p.grad is None else p.grad
        if max_entries is not None and p.size > max_entries:
            idx = rng.choice(p.size, size=max_entries, replace=False)
            a, num = analytic.ravel()[idx], numerical_grad(fn, p, h, idx).ravel()[idx]
        else:
            a, num = analytic, numerical_grad(fn, p, h)
        if max(np.max(np.abs(a), initial=0.0), np.max(np.abs(num), initial=0.0)) < zero_tol:
            errors.append(0.0)
        else:
            errors.append(rel_error(a, num))
    return errors


def directional_check(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
                      seed: int = 0) -> float:
    """Compare <grad, v> with the central difference of ``fn`` along a random direction ``v``."""
    for p in params:
        p.grad = None
    out = fn()
    out.backward(np.ones_like(out.data))
    rng = np.random.default_rng(seed)
    dirs = [rng.standard_normal(p.shape) for p in params]
    analytic = sum(float(np.sum((p.grad if p.grad is not None else 0.0) * d)) for p, d in zip(params, dirs))
    origs = [p.data.copy() for p in params]
    with no_grad():
        for p, d, o in zip(params, dirs, origs):
            p.data[...] = o + h * d
        fp = float(fn().data.sum())
        for p, d, o in zip(params, dirs, origs):
            p.data[...] = o - h * d
        fm = float(fn().data.sum())
        for p, o in zip(params, origs):
            p.data[...] = o
    return rel_error(analytic, (fp - fm) / (2 * h))
