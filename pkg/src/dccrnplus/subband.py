"""Learnable subband analysis/synthesis and per-band instance normalization.

Spectra here are ``[B, T, F_net]`` complex (``F_net = 256`` network bins).
Analysis multiplies each contiguous ``F_net / K`` bin block by its own complex
matrix ``A_k`` (no cross-band mixing); synthesis concatenates the bands and
applies one full ``F_net x F_net`` complex matrix ``S``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .complex_blocks import ComplexTensor, cmatmul
from .module import Module, param

NORM_EPS = 1e-5
INIT_NOISE = 1e-3


@dataclass(frozen=True)
class SubbandConfig:
    n_bands: int = 4
    n_bins: int = 256

    def __post_init__(self):
        if self.n_bands < 1 or self.n_bins % self.n_bands:
            raise ValueError(f"{self.n_bins} bins cannot be split into {self.n_bands} equal bands")

    @property
    def band_width(self) -> int:
        return self.n_bins // self.n_bands


def split_bands(y: ComplexTensor, a_re: Tensor, a_im: Tensor) -> ComplexTensor:
    """``[B, T, F]`` -> ``[B, K, T, W]``; ``a_re``/``a_im`` are ``[K, W, W]``."""
    k, w, _ = a_re.shape
    b, t, f = y.shape
    if f != k * w:
        raise ShapeError(f"spectrum has {f} bins, filters expect {k} x {w}")
    blocks = y.reshape(b, t, k, w).transpose(0, 2, 1, 3)  # B, K, T, W
    return cmatmul(blocks, a_re, a_im)


def merge_bands(bands: ComplexTensor, s_re: Tensor, s_im: Tensor) -> ComplexTensor:
    """``[B, K, T, W]`` -> ``[B, T, K*W]`` through the full synthesis matrix."""
    b, k, t, w = bands.shape
    if s_re.shape != (k * w, k * w):
        raise ShapeError(f"synthesis matrix {s_re.shape} does not fit {k} bands of {w} bins")
    cat = bands.transpose(0, 2, 1, 3).reshape(b, t, k * w)
    return cmatmul(cat, s_re, s_im)


def _norm_plane(x: Tensor, gamma, beta, eps: float) -> Tensor:
    mu = ad.mean(x, axis=(2, 3), keepdims=True)
    v = ad.var(x, axis=(2, 3), keepdims=True)
    return (x - mu) / ad.sqrt(v + eps) * gamma + beta


def instance_norm(x: ComplexTensor, gamma: ComplexTensor, beta: ComplexTensor, eps: float = NORM_EPS) -> ComplexTensor:
    """Normalize each (band, plane) of ``[B, K, T, W]`` over T x W, then affine.

    ``gamma``/``beta`` broadcast as ``[K, 1, 1]`` per plane.
    """
    return ComplexTensor(
        _norm_plane(x.re, gamma.re, beta.re, eps),
        _norm_plane(x.im, gamma.im, beta.im, eps),
    )


@dataclass
class NormState:
    """Running sums for the causal normalizer, one entry per (batch, band)."""

    count: float
    s1: np.ndarray  # [2, B, K, 1, 1] for re/im
    s2: np.ndarray


def _causal_plane(x: Tensor, gamma, beta, eps: float, count0: float, s1: np.ndarray, s2: np.ndarray):
    b, k, t, w = x.shape
    frame_sum = ad.tsum(x, axis=3, keepdims=True)  # B, K, T, 1
    frame_sq = ad.tsum(x * x, axis=3, keepdims=True)
    c1 = ad.cumsum(frame_sum, axis=2) + Tensor(s1)
    c2 = ad.cumsum(frame_sq, axis=2) + Tensor(s2)
    n = (count0 + w * np.arange(1, t + 1, dtype=x.dtype)).reshape(1, 1, t, 1)
    mu = c1 / n
    v = c2 / n - mu * mu
    # cancellation can dip a hair below zero on near-constant input
    v = ad.prelu(v, np.zeros(1, x.dtype))
    y = (x - mu) / ad.sqrt(v + eps) * gamma + beta
    return y, c1.data[:, :, -1:].copy(), c2.data[:, :, -1:].copy()


def causal_instance_norm(x: ComplexTensor, gamma, beta, state: NormState | None = None, eps: float = NORM_EPS):
    """Like :func:`instance_norm` but frame t uses statistics of frames <= t.

    Returns ``(y, new_state)``.  Chunked calls chained through ``state``
    reproduce one call over the whole sequence.
    """
    b, k, t, w = x.shape
    if state is None:
        zeros = np.zeros((2, b, k, 1, 1), x.re.dtype)
        state = NormState(0.0, zeros, zeros.copy())
    y_re, s1r, s2r = _causal_plane(x.re, gamma.re, beta.re, eps, state.count, state.s1[0], state.s2[0])
    y_im, s1i, s2i = _causal_plane(x.im, gamma.im, beta.im, eps, state.count, state.s1[1], state.s2[1])
    new = NormState(state.count + w * t, np.stack([s1r, s1i]), np.stack([s2r, s2i]))
    return ComplexTensor(y_re, y_im), new


def _identity_init(shape_lead, w, rng):
    eye = np.broadcast_to(np.eye(w), (*shape_lead, w, w))
    return eye + INIT_NOISE * rng.standard_normal(eye.shape), INIT_NOISE * rng.standard_normal(eye.shape)


class Subband(Module):
    """Analysis filters, synthesis filter and the per-band normalizer affine.

    ``norm`` is ``"causal"`` (running statistics, stream-compatible),
    ``"utterance"`` (whole-utterance statistics) or ``"none"``.
    """

    def __init__(self, cfg: SubbandConfig = SubbandConfig(), norm: str = "causal", rng=None, noise: bool = True):
        if norm not in ("causal", "utterance", "none"):
            raise ValueError(f"unknown norm mode {norm!r}")
        rng = rng or np.random.default_rng(0)
        k, w = cfg.n_bands, cfg.band_width
        a_re, a_im = _identity_init((k,), w, rng)
        s_re, s_im = _identity_init((), cfg.n_bins, rng)
        if not noise:
            a_re, a_im = np.broadcast_to(np.eye(w), (k, w, w)), np.zeros((k, w, w))
            s_re, s_im = np.eye(cfg.n_bins), np.zeros((cfg.n_bins, cfg.n_bins))
        self.a_re, self.a_im = param(a_re), param(a_im)
        self.s_re, self.s_im = param(s_re), param(s_im)
        self.g_re = param(np.ones((k, 1, 1)))
        self.g_im = param(np.ones((k, 1, 1)))
        self.b_re = param(np.zeros((k, 1, 1)))
        self.b_im = param(np.zeros((k, 1, 1)))
        self.cfg, self.norm = cfg, norm

    def split(self, y: ComplexTensor) -> ComplexTensor:
        return split_bands(y, self.a_re, self.a_im)

    def normalize(self, bands: ComplexTensor, state: NormState | None = None):
        gamma = ComplexTensor(self.g_re, self.g_im)
        beta = ComplexTensor(self.b_re, self.b_im)
        if self.norm == "causal":
            return causal_instance_norm(bands, gamma, beta, state)
        if self.norm == "utterance":
            return instance_norm(bands, gamma, beta), None
        return bands, None

    def merge(self, bands: ComplexTensor) -> ComplexTensor:
        return merge_bands(bands, self.s_re, self.s_im)

