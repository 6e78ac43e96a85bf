"""Tiny parameter container: attributes that are grad-requiring Tensors are
parameters, other Tensors are buffers, Modules and lists of Modules nest."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .autodiff import Tensor, get_default_dtype


class Module:
    training = True

    def _children(self):
        for key, val in vars(self).items():
            if isinstance(val, Module):
                yield key, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + key, val
        for key, child in self._children():
            yield from child.named_parameters(f"{prefix}{key}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and not val.requires_grad:
                yield prefix + key, val
        for key, child in self._children():
            yield from child.named_buffers(f"{prefix}{key}.")

    def parameters(self) -> dict:
        return dict(self.named_parameters())

    def state_dict(self) -> dict:
        out = {name: t.data for name, t in self.named_parameters()}
        out.update({name: t.data for name, t in self.named_buffers()})
        return out

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        own.update(self.named_buffers())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, t in own.items():
            arr = np.asarray(state[name])
            if arr.shape != t.shape:
                raise ValueError(f"{name}: shape {arr.shape} does not match {t.shape}")
            t.data = arr.astype(t.dtype, copy=True)

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        """Cast every parameter and buffer in place (e.g. float64 inference)."""
        for _, t in list(self.named_parameters()) + list(self.named_buffers()):
            t.data = t.data.astype(dtype)
        return self

    @property
    def dtype(self):
        for _, p in self.named_parameters():
            return p.dtype
        return np.dtype(get_default_dtype())

    def num_parameters(self) -> int:
        return int(sum(p.size for _, p in self.named_parameters()))


def param(data, dtype=None) -> Tensor:
    return Tensor(np.array(data, dtype=dtype or get_default_dtype()), requires_grad=True)


def buffer(data, dtype=None) -> Tensor:
    return Tensor(np.array(data, dtype=dtype or get_default_dtype()))
