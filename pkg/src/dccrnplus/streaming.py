"""Sample-in, sample-out streaming around the frame-level network.

Audio arrives in arbitrary chunks.  Every complete 320-sample window is
analysed and fed to :meth:`DCCRNPlus.stream_process`, which answers with the
previous frame.  That frame (optionally scaled by the MMSE-LSA gain) is
overlap-added into the output, after which the output hop it completes is
released.

Latency accounting: output sample n is released once the window starting one
hop after n's own frame has fully arrived, i.e. ``frame_len + hop`` = 480
samples (30 ms) after the frame start.  On top of that, real-time operation
allows one hop (10 ms) to compute each frame, for 40 ms in total.
"""
from __future__ import annotations

import time
from collections import deque
from contextlib import contextmanager

import numpy as np

from . import dsp
from .model import DCCRNPlus
from .postproc import SnrTrack, apply_postproc, postproc_frame


class StreamingEnhancer:
    def __init__(self, model: DCCRNPlus, postproc: bool = True, framing: dsp.Framing = dsp.Framing()):
        self.model, self.postproc, self.fr = model, postproc, framing
        self.window = dsp.sqrt_hann(framing.frame_len)
        self.timers: dict | None = None  # stage -> seconds when set to a dict
        self.reset()

    @contextmanager
    def _stage(self, name: str):
        if self.timers is None:
            yield
            return
        t0 = time.perf_counter()
        yield
        self.timers[name] = self.timers.get(name, 0.0) + time.perf_counter() - t0

    def reset(self) -> None:
        self.state = self.model.new_stream()
        self.track = SnrTrack()
        self.inbuf = np.zeros(0)
        self.n_in = 0  # samples received
        self.n_frames = 0  # frames analysed
        self.noisy = deque()  # noisy frames awaiting their enhanced output
        self.ola = np.zeros(self.fr.frame_len)
        self.n_out = 0  # samples released
        self.release_log: list = []  # (first sample released, count, samples received at release)
        self.gains: list = []

    def _emit(self, enhanced: np.ndarray, final: bool = False) -> np.ndarray:
        y = self.noisy.popleft()
        if self.postproc:
            with self._stage("postproc"):
                enhanced, g, _ = postproc_frame(self.track, enhanced, y)
            self.gains.append(g)
        with self._stage("istft"):
            frame = np.fft.irfft(enhanced, n=self.fr.fft_size)[:self.fr.frame_len] * self.window
            self.ola += frame
            n = self.fr.frame_len if final else self.fr.hop
            out = self.ola[:n].copy()
            self.ola = np.concatenate([self.ola[n:], np.zeros(n)])
        self.release_log.append((self.n_out, n, self.n_in))
        self.n_out += n
        return out

    def push(self, samples) -> np.ndarray:
        """Feed a chunk of audio; returns whatever output became final."""
        samples = np.asarray(samples, dtype=np.float64)
        self.inbuf = np.concatenate([self.inbuf, samples])
        self.n_in += len(samples)
        outs = []
        fl, hop = self.fr.frame_len, self.fr.hop
        while len(self.inbuf) >= fl:
            with self._stage("stft"):
                spec = np.fft.rfft(self.inbuf[:fl] * self.window, n=self.fr.fft_size)
                self.inbuf = self.inbuf[hop:]
            self.noisy.append(spec)
            enh = self.model.stream_process(self.state, spec.astype(np.complex128), self.n_frames)
            self.n_frames += 1
            if enh is not None:
                outs.append(self._emit(enh))
        return np.concatenate(outs) if outs else np.zeros(0)

    def finish(self) -> np.ndarray:
        """Flush the look-ahead frame; total output length matches offline iSTFT."""
        if self.n_frames == 0:
            return np.zeros(0)
        enh = self.model.stream_flush(self.state)
        return self._emit(enh, final=True)

    def max_latency_samples(self) -> int:
        """Largest gap between a sample's frame start and its release (hop chunks)."""
        worst = 0
        for start, count, n_in in self.release_log[:-1]:
            worst = max(worst, n_in - start)
        return worst


def latency_report(model: DCCRNPlus, seconds: float = 0.5, framing: dsp.Framing = dsp.Framing()) -> dict:
    """Drive the engine hop by hop and measure when output becomes available."""
    eng = StreamingEnhancer(model, postproc=False, framing=framing)
    x = np.random.default_rng(0).standard_normal(int(seconds * framing.sample_rate)) * 0.1
    for i in range(0, len(x), framing.hop):
        eng.push(x[i:i + framing.hop])
    eng.finish()
    buffering = eng.max_latency_samples()
    total = buffering + framing.hop
    sr = framing.sample_rate
    return {
        "window_ms": 1000 * framing.frame_len / sr,
        "hop_ms": 1000 * framing.hop / sr,
        "lookahead_ms": 1000 * model.cfg.lookahead_frames * framing.hop / sr,
        "buffering_ms": 1000 * buffering / sr,
        "processing_budget_ms": 1000 * framing.hop / sr,
        "algorithmic_latency_ms": 1000 * total / sr,
    }


def enhance_offline(model: DCCRNPlus, x, postproc: bool = True) -> np.ndarray:
    spec = dsp.stft(np.asarray(x, dtype=np.float64))
    enh = model.enhance(spec)
    if postproc:
        enh = apply_postproc(enh, spec)
    return dsp.istft(enh)


def enhance_streaming(model: DCCRNPlus, x, postproc: bool = True, chunk: int = dsp.HOP) -> np.ndarray:
    eng = StreamingEnhancer(model, postproc=postproc)
    x = np.asarray(x, dtype=np.float64)
    parts = [eng.push(x[i:i + chunk]) for i in range(0, len(x), chunk)]
    parts.append(eng.finish())
    return np.concatenate(parts)
