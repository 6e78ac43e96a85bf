"""Real-time-factor benchmark with a per-stage breakdown.

RTF is wall-clock processing time over audio duration, measured with BLAS
pinned to one thread after a warm-up pass, as the median of several runs.
Stage times come from the model's own timers plus explicit timing of the
STFT, post-processing and inverse STFT; whatever falls outside every named
stage is reported as ``other`` so the coverage of the breakdown is visible.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from . import dsp
from .model import DCCRNPlus
from .postproc import SnrTrack, postproc_frame
from .streaming import StreamingEnhancer

REFERENCE_RTF = 0.250  # published figure for the full model on one 2.5 GHz core
STAGES = ("stft", "subband", "encoder", "tf_lstm", "decoder", "deep_filter", "postproc", "istft")


@dataclass
class BenchReport:
    mode: str
    audio_seconds: float
    runs: int
    rtf: float  # median over runs
    rtf_runs: list
    stages: dict = field(default_factory=dict)  # seconds in the median run
    total_seconds: float = 0.0

    @property
    def stage_sum(self) -> float:
        return float(sum(self.stages.values()))

    @property
    def coverage(self) -> float:
        """Named-stage time as a fraction of the total."""
        return self.stage_sum / self.total_seconds if self.total_seconds else 0.0

    def lines(self) -> list:
        out = [f"mode={self.mode} audio_s={self.audio_seconds:.2f} runs={self.runs} threads=1",
               f"rtf={self.rtf:.4f} reference_rtf={REFERENCE_RTF:.3f}"]
        for name in STAGES:
            if name in self.stages:
                t = self.stages[name]
                out.append(f"stage={name} seconds={t:.4f} share={t / self.total_seconds:.3f}")
        other = self.total_seconds - self.stage_sum
        out.append(f"stage=other seconds={other:.4f} share={other / self.total_seconds:.3f}")
        out.append(f"total_seconds={self.total_seconds:.4f} stage_sum={self.stage_sum:.4f} coverage={self.coverage:.4f}")
        return out


def _timed(timers: dict, name: str, fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    timers[name] = timers.get(name, 0.0) + time.perf_counter() - t0
    return out


def _offline_run(model: DCCRNPlus, x: np.ndarray, postproc: bool) -> tuple:
    timers: dict = {}
    model.timers = timers
    t0 = time.perf_counter()
    spec = _timed(timers, "stft", dsp.stft, x)
    with ad.no_grad():
        out, _ = model.forward(spec[None], with_snr=False)
    enh = out.numpy()[0]
    if postproc:
        track = SnrTrack()
        t1 = time.perf_counter()
        for t in range(len(enh)):
            enh[t] = postproc_frame(track, enh[t], spec[t])[0]
        timers["postproc"] = time.perf_counter() - t1
    _timed(timers, "istft", dsp.istft, enh)
    total = time.perf_counter() - t0
    model.timers = None
    return total, timers


def _stream_run(model: DCCRNPlus, x: np.ndarray, postproc: bool) -> tuple:
    """Hop-sized pushes through the sample-level engine; engine and model share one timer dict."""
    timers: dict = {}
    eng = StreamingEnhancer(model, postproc=postproc)
    eng.timers = model.timers = timers
    hop = eng.fr.hop
    t0 = time.perf_counter()
    for i in range(0, len(x), hop):
        eng.push(x[i:i + hop])
    eng.finish()
    total = time.perf_counter() - t0
    model.timers = None
    return total, timers


def run_bench(model: DCCRNPlus, seconds: float = 10.0, runs: int = 5, mode: str = "offline",
              postproc: bool = True, seed: int = 0) -> BenchReport:
    if runs < 1:
        raise ValueError("need at least one run")
    if mode not in ("offline", "stream"):
        raise ValueError(f"mode must be 'offline' or 'stream', got {mode!r}")
    x = 0.1 * np.random.default_rng(seed).standard_normal(int(seconds * dsp.SAMPLE_RATE))
    fn = _offline_run if mode == "offline" else _stream_run
    model.eval()
    results = []
    with threadpool_limits(limits=1):
        fn(model, x[:dsp.SAMPLE_RATE], postproc)  # warm-up
        for _ in range(runs):
            results.append(fn(model, x, postproc))
    totals = [r[0] for r in results]
    mid = int(np.argsort(totals)[len(totals) // 2])
    total, timers = results[mid]
    stages = {k: timers[k] for k in STAGES if k in timers}
    rtfs = [t / seconds for t in totals]
    return BenchReport(mode, seconds, runs, float(np.median(rtfs)), rtfs, stages, total)
