"""STFT framing and the training-data simulation primitives.

Framing is fixed at 20 ms windows, 10 ms hop and a 512-point FFT at
16 kHz: each 320-sample frame is multiplied by a square-root periodic Hann
window and zero-padded to 512 before the real FFT, giving 257 bins.  The
same window is used for synthesis; at 50 % overlap the product of the two
windows sums to one, so overlap-add reconstructs every sample covered by two
frames exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

SAMPLE_RATE = 16000
FRAME_LEN = 320
HOP = 160
FFT_SIZE = 512

BIQUAD_RANGE = 0.375
BIQUAD_MAX_DRAWS = 16


class SilentSignalError(ValueError):
    """A signal with zero energy where a power ratio is needed."""


@dataclass(frozen=True)
class Framing:
    frame_len: int = FRAME_LEN
    hop: int = HOP
    fft_size: int = FFT_SIZE
    sample_rate: int = SAMPLE_RATE

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.frame_len) // self.hop

    def n_samples(self, n_frames: int) -> int:
        return (n_frames - 1) * self.hop + self.frame_len


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def sqrt_hann(n: int) -> np.ndarray:
    return np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n))


def stft(x, framing: Framing = Framing()) -> np.ndarray:
    """Complex spectrogram ``[..., T, F]`` of ``x[..., N]``.

    Raises ``ValueError`` if the input is shorter than one frame; the signal
    is never padded implicitly.
    """
    x = np.asarray(getattr(x, "samples", x))
    if x.shape[-1] < framing.frame_len:
        raise ValueError(f"input has {x.shape[-1]} samples, need at least one frame of {framing.frame_len}")
    frames = np.lib.stride_tricks.sliding_window_view(x, framing.frame_len, axis=-1)[..., ::framing.hop, :]
    win = sqrt_hann(framing.frame_len).astype(x.dtype if x.dtype.kind == "f" else np.float64)
    return np.fft.rfft(frames * win, n=framing.fft_size, axis=-1)


def istft(spec, framing: Framing = Framing(), window: bool = True) -> np.ndarray:
    """Overlap-add inverse of :func:`stft`; output length ``(T-1)*hop + frame_len``.

    ``window=False`` skips the synthesis window (used to inspect raw frames).
    """
    spec = np.asarray(spec)
    if spec.shape[-1] != framing.n_bins:
        raise ValueError(f"spectrogram has {spec.shape[-1]} bins, expected {framing.n_bins}")
    frames = np.fft.irfft(spec, n=framing.fft_size, axis=-1)[..., :framing.frame_len]
    if window:
        frames = frames * sqrt_hann(framing.frame_len)
    return overlap_add(frames, framing.hop)


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    *lead, t_len, flen = frames.shape
    out = np.zeros((*lead, (t_len - 1) * hop + flen), dtype=frames.dtype)
    for t in range(t_len):
        out[..., t * hop:t * hop + flen] += frames[..., t, :]
    return out


def synthesis_matrices(framing: Framing = Framing(), dtype=np.float64):
    """Real matrices ``(Cr, Ci)`` with ``frame = Re(X) @ Cr + Im(X) @ Ci``.

    The frame is the windowed first ``frame_len`` samples of the inverse real
    FFT, i.e. exactly what :func:`istft` overlap-adds.
    """
    n = framing.fft_size
    k = np.arange(framing.n_bins)[:, None]
    t = np.arange(framing.frame_len)[None, :]
    scale = np.full((framing.n_bins, 1), 2.0 / n)
    scale[0] = scale[-1] = 1.0 / n
    ang = 2 * np.pi * k * t / n
    win = sqrt_hann(framing.frame_len)
    cr = scale * np.cos(ang) * win
    ci = -scale * np.sin(ang) * win
    return cr.astype(dtype), ci.astype(dtype)


def power(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x))


def fit_length(x: np.ndarray, n: int) -> np.ndarray:
    """Loop (tile) or truncate ``x`` to exactly ``n`` samples."""
    return np.resize(np.asarray(x), n)


def mix_at_snr(speech, noise, snr_db: float):
    """Scale ``noise`` so that speech/noise power is ``snr_db`` and add.

    Returns ``(noisy, clean, noise_scaled)``; the noise is looped or truncated
    to the speech length first.
    """
    speech = np.asarray(getattr(speech, "samples", speech))
    noise = fit_length(getattr(noise, "samples", noise), len(speech))
    ps, pn = power(speech), power(noise)
    if ps <= 0:
        raise SilentSignalError("speech is silent; SNR undefined")
    if pn <= 0:
        raise SilentSignalError("noise is silent; SNR undefined")
    gain = np.sqrt(ps / (pn * 10.0 ** (snr_db / 10.0)))
    noise_scaled = noise.astype(np.float64) * gain
    noisy = speech.astype(np.float64) + noise_scaled
    dtype = speech.dtype if speech.dtype.kind == "f" else np.float64
    return noisy.astype(dtype), speech.astype(dtype), noise_scaled.astype(dtype)


def measured_snr_db(clean, noise) -> float:
    return 10.0 * np.log10(power(clean) / power(noise))


def convolve_rir(speech, rir) -> np.ndarray:
    """Reverberate ``speech``: linear convolution truncated to the input length,
    rescaled so the output peak equals the dry peak."""
    speech = np.asarray(getattr(speech, "samples", speech))
    rir = np.asarray(getattr(rir, "samples", rir))
    if rir.size == 0:
        raise ValueError("empty RIR")
    if len(rir) >= len(speech):
        raise ValueError(f"RIR ({len(rir)} taps) must be shorter than the speech ({len(speech)} samples)")
    wet = signal.fftconvolve(speech.astype(np.float64), rir.astype(np.float64))[:len(speech)]
    peak_wet = np.max(np.abs(wet))
    if peak_wet > 0:
        wet *= np.max(np.abs(speech)) / peak_wet
    return wet.astype(speech.dtype if speech.dtype.kind == "f" else np.float64)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def draw_biquad(seed) -> tuple:
    """Random ``(b, a)`` with b1, b2, a1, a2 ~ U[-0.375, 0.375]; redraws unstable filters."""
    rng = _rng(seed)
    for _ in range(BIQUAD_MAX_DRAWS):
        b1, b2, a1, a2 = rng.uniform(-BIQUAD_RANGE, BIQUAD_RANGE, 4)
        if np.all(np.abs(np.roots([1.0, a1, a2])) < 1.0):
            return np.array([1.0, b1, b2]), np.array([1.0, a1, a2])
    raise RuntimeError(f"no stable biquad after {BIQUAD_MAX_DRAWS} draws")


def biquad(x, b, a) -> np.ndarray:
    x = np.asarray(getattr(x, "samples", x))
    return signal.lfilter(b, a, x).astype(x.dtype if x.dtype.kind == "f" else np.float64)


def biquad_augment(x, seed) -> np.ndarray:
    b, a = draw_biquad(seed)
    return biquad(x, b, a)
