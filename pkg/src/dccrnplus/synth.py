"""Synthetic stand-ins for speech, noise and room responses.

Nothing here is meant to sound natural.  "Speech" is a voiced harmonic source
with a gliding pitch, a couple of formant-like resonances and syllable-rate
on/off envelopes, which gives it the sparse, time-varying harmonic structure
an enhancer has to learn to keep.  Noise is stationary-ish coloured noise.
"""
from __future__ import annotations

import numpy as np
from scipy import signal

from .dsp import SAMPLE_RATE, mix_at_snr


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def syllable_envelope(n: int, rng, sr: int = SAMPLE_RATE) -> np.ndarray:
    env = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.15) * sr)
    while pos < n:
        dur = int(rng.uniform(0.12, 0.35) * sr)
        seg = np.sin(np.pi * np.arange(dur) / dur) ** 0.7
        end = min(n, pos + dur)
        env[pos:end] = seg[:end - pos] * rng.uniform(0.5, 1.0)
        pos = end + int(rng.uniform(0.03, 0.2) * sr)
    return env


def harmonic_speech(n: int, seed=None, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Voiced, syllabic test signal normalized to peak 0.5."""
    rng = _rng(seed)
    t = np.arange(n) / sr
    f0 = rng.uniform(100, 250) * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.5, 3) * t + rng.uniform(0, 6.3)))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    formants = rng.uniform([300, 900], [900, 2500])
    x = np.zeros(n)
    for k in range(1, 40):
        fk = k * f0
        amp = (fk < 0.45 * sr) / k
        for fc in formants:
            amp = amp * (1 + 3 * np.exp(-((fk - fc) / 200.0) ** 2))
        x += amp * np.sin(k * phase)
    x *= syllable_envelope(n, rng, sr)
    peak = np.max(np.abs(x))
    return 0.5 * x / peak if peak > 0 else x


def colored_noise(n: int, seed=None) -> np.ndarray:
    """White noise through a random low- or high-shelf one-pole filter, unit RMS."""
    rng = _rng(seed)
    w = rng.standard_normal(n)
    pole = rng.uniform(-0.9, 0.95)
    x = signal.lfilter([1.0], [1.0, -pole], w)
    x = x * (1 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.1, 1.0) * np.arange(n) / SAMPLE_RATE))
    return x / np.sqrt(np.mean(x * x))


def synthetic_rir(seed=None, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Exponentially decaying noise tail with a unit direct path (RT60 0.2-0.6 s)."""
    rng = _rng(seed)
    rt60 = rng.uniform(0.2, 0.6)
    n = int(rt60 * sr * 0.5)
    tail = rng.standard_normal(n) * np.exp(-6.9 * np.arange(n) / (rt60 * sr))
    rir = 0.3 * tail
    rir[0] = 1.0
    return rir


def make_pairs(count: int, seconds: float, seed: int, snr_range=(-5.0, 20.0)):
    """``count`` (noisy, clean, noise) float32 triples of equal length."""
    rng = np.random.default_rng(seed)
    n = int(seconds * SAMPLE_RATE)
    out = []
    for _ in range(count):
        clean = harmonic_speech(n, rng)
        noise = colored_noise(n, rng)
        snr = rng.uniform(*snr_range)
        noisy, clean, noise = mix_at_snr(clean, noise, snr)
        out.append(tuple(a.astype(np.float32) for a in (noisy, clean, noise)))
    return out
