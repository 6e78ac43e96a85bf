"""Scripted toy experiments shared by the CLI and the acceptance tests."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import dsp, synth
from .model import DCCRNPlus, ModelConfig
from .trainer import TrainConfig, Trainer, dynamic_mix, evaluate_si_snr, make_batch


def block_means(values, block: int) -> np.ndarray:
    """Non-overlapping block averages (trailing partial block dropped)."""
    v = np.asarray(values, dtype=np.float64)
    n = len(v) // block
    return v[:n * block].reshape(n, block).mean(axis=1)


@dataclass
class ExperimentResult:
    history: list
    si_snr_out: float
    si_snr_in: float
    seconds: float
    model: DCCRNPlus = field(repr=False)

    @property
    def improvement(self) -> float:
        return self.si_snr_out - self.si_snr_in


def toy_overfit(steps: int = 400, n_pairs: int = 5, seconds: float = 1.0, seed: int = 1,
                snr_range=(-5.0, 5.0), callback=None) -> ExperimentResult:
    """Fit the reduced-width model to a handful of fixed pairs.

    The mixing range is kept low so the noisy input starts well under the
    10 dB mark the fit is judged against.
    """
    pairs = synth.make_pairs(n_pairs, seconds, seed=seed, snr_range=snr_range)
    batch = make_batch(pairs)
    model = DCCRNPlus(ModelConfig.toy(), seed=seed)
    tr = Trainer(model, TrainConfig(steps=steps, seed=seed), lambda _: batch)
    t0 = time.perf_counter()
    hist = tr.fit(callback=callback)
    out_db, in_db = evaluate_si_snr(model, pairs)
    return ExperimentResult(hist, out_db, in_db, time.perf_counter() - t0, model)


def synthetic_pools(seed: int, n_speech: int = 40, n_noise: int = 20, n_rir: int = 8, seconds: float = 4.0):
    rng = np.random.default_rng(seed)
    n = int(seconds * dsp.SAMPLE_RATE)
    speech = [synth.harmonic_speech(n, rng) for _ in range(n_speech)]
    noise = [synth.colored_noise(n, rng) for _ in range(n_noise)]
    rirs = [synth.synthetic_rir(rng) for _ in range(n_rir)]
    return speech, noise, rirs


def toy_generalization(steps: int = 1500, batch_size: int = 4, crop_seconds: float = 2.0, seed: int = 0,
                       n_test: int = 5, callback=None) -> ExperimentResult:
    """Train with dynamic mixing on one synthetic pool, score on mixtures from a disjoint pool."""
    speech, noise, rirs = synthetic_pools(seed)
    cfg = TrainConfig(steps=steps, batch_size=batch_size, crop_seconds=crop_seconds, seed=seed, val_every=250)
    n = int(crop_seconds * dsp.SAMPLE_RATE)

    def batch_fn(step):
        return make_batch([dynamic_mix(speech, noise, rirs, cfg, (seed, step, i), n) for i in range(batch_size)])

    val = [batch_fn(10**6 + i) for i in range(2)]
    model = DCCRNPlus(ModelConfig.toy(), seed=seed)
    tr = Trainer(model, cfg, batch_fn, val)
    t0 = time.perf_counter()
    hist = tr.fit(callback=callback)
    secs = time.perf_counter() - t0

    t_speech, t_noise, t_rirs = synthetic_pools(seed + 1000, n_speech=n_test, n_noise=n_test, n_rir=2)
    test = [dynamic_mix(t_speech, t_noise, t_rirs, cfg, (seed + 1000, i), n) for i in range(n_test)]
    out_db, in_db = evaluate_si_snr(model, test)
    return ExperimentResult(hist, out_db, in_db, secs, model)
