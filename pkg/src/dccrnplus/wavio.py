"""Mono WAV I/O: 16-bit PCM and 32-bit float."""
from __future__ import annotations

import struct
import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import Waveform


class WavError(ValueError):
    """Base class for WAV problems."""


class WavHeaderError(WavError):
    """Truncated or malformed file."""


class WavFormatError(WavError):
    """Well-formed file in a format we do not handle (stereo, 8/24-bit, ...)."""


def wav_read(path) -> Waveform:
    path = Path(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except wavfile.WavFileWarning as exc:
        raise WavHeaderError(f"{path}: {exc}") from exc
    except (struct.error, EOFError) as exc:
        raise WavHeaderError(f"{path}: truncated header ({exc})") from exc
    except ValueError as exc:
        raise WavHeaderError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: {data.shape[1]} channels; only mono is supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype == np.float32:
        samples = data
    else:
        raise WavFormatError(f"{path}: unsupported sample type {data.dtype}; use PCM16 or float32")
    return Waveform(samples, int(rate))


def wav_write(path, wave, sample_rate: int | None = None, subtype: str = "float32") -> None:
    """Write mono audio; ``subtype`` is ``"float32"`` or ``"pcm16"`` (clipped to [-1, 1))."""
    samples = np.asarray(getattr(wave, "samples", wave))
    rate = sample_rate or getattr(wave, "sample_rate", None)
    if rate is None:
        raise ValueError("sample rate required")
    if samples.ndim != 1:
        raise WavFormatError("only mono audio can be written")
    if subtype == "float32":
        data = samples.astype(np.float32)
    elif subtype == "pcm16":
        data = np.clip(np.round(samples.astype(np.float64) * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown subtype {subtype!r}")
    wavfile.write(Path(path), int(rate), data)
