"""Training targets and objectives.

Frame SNR labels: per-frame clean/noise RMS ratio in dB, standardized with
running (per-utterance, exponentially averaged) mean and spread, then
squashed to (0, 1) through the Gaussian CDF ``(erf(z) + 1) / 2``.

Objective: SI-SNR on waveforms plus ``delta`` times the MSE between the
estimated and target frame SNR.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import autodiff as ad
from . import dsp
from .autodiff import Tensor
from .complex_blocks import ComplexTensor

ALPHA = 0.99
DELTA = 30.0
SNR_EPS = 1e-8
SI_SNR_EPS = 1e-8
_LOG10 = math.log(10.0)
_FLOOR = 1e-30


# ------------------------------------------------------------------ labels
def snr_label_raw(clean_spec, noise_spec, eps: float = SNR_EPS) -> np.ndarray:
    """Per-frame SNR in dB from ``[T, F]`` clean and noise spectra."""
    x, n = np.asarray(clean_spec), np.asarray(noise_spec)
    if x.shape[:-1] != n.shape[:-1]:
        raise ValueError(f"frame counts differ: {x.shape} vs {n.shape}")
    ex = np.mean(np.abs(x) ** 2, axis=-1)
    en = np.mean(np.abs(n) ** 2, axis=-1)
    return 10.0 * np.log10(np.maximum(ex, eps) / np.maximum(en, eps))


@dataclass
class SnrLabelState:
    mu: float = 0.0
    sigma: float = 0.0
    alpha: float = ALPHA
    initialized: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")


def update_label_stats(state: SnrLabelState, xi) -> SnrLabelState:
    """Fold one utterance's frame SNRs into the running mean/std (in place)."""
    xi = np.asarray(xi, dtype=np.float64)
    mu, sigma = float(np.mean(xi)), float(np.std(xi))
    if not state.initialized:
        state.mu, state.sigma, state.initialized = mu, sigma, True
    else:
        a = state.alpha
        state.mu = state.mu * a + mu * (1 - a)
        state.sigma = state.sigma * a + sigma * (1 - a)
    return state


def normalize_compress(xi, state: SnrLabelState) -> np.ndarray:
    """Map raw dB values into the open interval (0, 1), monotonically."""
    if not state.initialized or state.sigma <= 0:
        raise ValueError(f"degenerate SNR statistics (sigma={state.sigma}); need at least one varied utterance")
    z = (np.asarray(xi, dtype=np.float64) - state.mu) / state.sigma
    # (erf(z)+1)/2 written via erfc to keep the lower tail; clip keeps both ends open
    lab = 0.5 * special.erfc(-z)
    return np.clip(lab, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))


def snr_labels(clean_spec, noise_spec, state: SnrLabelState, update: bool = True) -> np.ndarray:
    xi = snr_label_raw(clean_spec, noise_spec)
    if update:
        update_label_stats(state, xi)
    return normalize_compress(xi, state)


# ------------------------------------------------------------------ losses
def istft_tensor(spec: ComplexTensor, framing: dsp.Framing = dsp.Framing()) -> Tensor:
    """Differentiable inverse STFT of ``[B, T, F]``; matches :func:`dsp.istft`."""
    if framing.frame_len != 2 * framing.hop:
        raise ValueError("differentiable overlap-add assumes 50 % overlap")
    cr, ci = dsp.synthesis_matrices(framing, dtype=spec.re.dtype)
    frames = ad.matmul(spec.re, Tensor(cr)) + ad.matmul(spec.im, Tensor(ci))  # B, T, L
    b, t, _ = frames.shape
    h = framing.hop
    first = ad.pad(frames[:, :, :h], ((0, 0), (0, 1), (0, 0)))
    second = ad.pad(frames[:, :, h:], ((0, 0), (1, 0), (0, 0)))
    return (first + second).reshape(b, (t + 1) * h)


def si_snr_loss(est, ref, eps: float = SI_SNR_EPS) -> Tensor:
    """Negative SI-SNR in dB, averaged over the batch.

    The error energy is floored at ``eps`` times the target energy, so a
    perfect estimate scores ``-10 log10(1/eps) = -80`` dB and scaling the
    estimate leaves the loss bit-identical.
    """
    est, ref = ad.as_tensor(est), ad.as_tensor(ref)
    if est.shape != ref.shape:
        raise ValueError(f"estimate {est.shape} and reference {ref.shape} differ in length")
    ref_energy = np.sum(ref.data.astype(np.float64) ** 2, axis=-1)
    if np.any(ref_energy <= 0):
        raise dsp.SilentSignalError("reference is silent; SI-SNR undefined")
    dot = ad.tsum(est * ref, axis=-1, keepdims=True)
    s = dot / ad.tsum(ref * ref, axis=-1, keepdims=True) * ref
    e = est - s
    s_e = ad.tsum(s * s, axis=-1)
    e_e = ad.tsum(e * e, axis=-1)
    ratio_db = ad.log((s_e + _FLOOR) / (e_e + s_e * eps + _FLOOR)) * (10.0 / _LOG10)
    return -ad.mean(ratio_db)


def snr_mse(snr_est, snr_label) -> Tensor:
    snr_est = ad.as_tensor(snr_est)
    label = Tensor(np.asarray(snr_label, dtype=snr_est.dtype))
    if label.shape != snr_est.shape:
        raise ValueError(f"SNR estimate {snr_est.shape} and label {label.shape} are not aligned")
    d = snr_est - label
    return ad.mean(d * d)


def combined_loss(est_wave, ref_wave, snr_est, snr_label, delta: float = DELTA):
    """Returns ``(total, si_snr_term, snr_term)``."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    l_si = si_snr_loss(est_wave, ref_wave)
    l_snr = snr_mse(snr_est, snr_label)
    return l_si + l_snr * delta, l_si, l_snr
