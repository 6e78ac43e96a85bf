"""Desk-scale training: on-the-fly mixing, Adam, plateau halving, checkpoints."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import dsp
from .autodiff import AdamState, adam_step, clip_grad_norm
from .checkpoint import load_checkpoint, save_checkpoint
from .losses import SnrLabelState, combined_loss, istft_tensor, normalize_compress, snr_label_raw, update_label_stats
from .model import PRESETS, DCCRNPlus
from .wavio import WavError, wav_read

log = logging.getLogger(__name__)

ROLES = ("speech", "noise", "rir")


class DataError(ValueError):
    """Bad manifest, missing or unreadable audio, empty pool."""


class NumericalError(FloatingPointError):
    """Non-finite loss or gradient; ``diagnostics`` maps stage -> output norm."""

    def __init__(self, msg: str, diagnostics: dict | None = None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass
class TrainConfig:
    lr: float = 1e-3
    lr_decay: float = 0.5
    snr_range: tuple = (-5.0, 20.0)
    rir_prob: float = 0.5
    biquad_prob: float = 0.5
    batch_size: int = 4
    steps: int = 2000
    seed: int = 0
    crop_seconds: float = 4.0
    clip_norm: float = 5.0
    delta: float = 30.0
    alpha: float = 0.99
    val_every: int = 500

    def __post_init__(self):
        self.snr_range = tuple(float(v) for v in self.snr_range)
        for name in ("rir_prob", "biquad_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")
        if self.snr_range[0] > self.snr_range[1]:
            raise ValueError(f"snr_range {self.snr_range} is not ordered")
        if self.batch_size < 1 or self.steps < 0 or self.val_every < 1:
            raise ValueError("batch_size and val_every must be positive, steps non-negative")


# ------------------------------------------------------------------- data
def load_manifest(path) -> dict:
    """Read ``role path`` lines (``#`` comments allowed) into audio pools."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    pools = {role: [] for role in ROLES}
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        if len(parts) != 2 or parts[0] not in ROLES:
            raise DataError(f"{path}:{no}: expected '<speech|noise|rir> <wav path>', got {line!r}")
        wav = Path(parts[1])
        if not wav.is_absolute():
            wav = path.parent / wav
        try:
            pools[parts[0]].append(wav_read(wav).samples.astype(np.float64))
        except (OSError, WavError) as exc:
            raise DataError(f"{path}:{no}: {exc}") from exc
    return pools


def dynamic_mix(speech_pool, noise_pool, rir_pool, cfg: TrainConfig, seed, n_samples: int | None = None, return_info=False):
    """Draw one ``(noisy, clean, noise)`` training triple.

    Reverberation (if drawn) is applied to the speech and the reverberant
    speech is the target; the biquad coloration (if drawn) filters speech
    and noise with independent filters.  Mixing happens last, so the output
    SNR equals the drawn SNR.
    """
    if not speech_pool or not noise_pool:
        raise DataError("speech and noise pools must be non-empty")
    rng = np.random.default_rng(seed)
    speech = speech_pool[rng.integers(len(speech_pool))]
    noise = noise_pool[rng.integers(len(noise_pool))]
    n = len(speech) if n_samples is None else min(n_samples, len(speech))
    start = rng.integers(len(speech) - n + 1)
    speech = np.asarray(speech[start:start + n], dtype=np.float64)
    noise = dsp.fit_length(np.roll(noise, -int(rng.integers(len(noise)))), n)
    snr = rng.uniform(*cfg.snr_range)
    use_rir = bool(rir_pool) and rng.random() < cfg.rir_prob
    if use_rir:
        speech = dsp.convolve_rir(speech, rir_pool[rng.integers(len(rir_pool))])
    use_bq = rng.random() < cfg.biquad_prob
    if use_bq:
        speech = dsp.biquad_augment(speech, rng)
        noise = dsp.biquad_augment(noise, rng)
    noisy, clean, noise = dsp.mix_at_snr(speech, noise, snr)
    if return_info:
        return (noisy, clean, noise), {"snr": snr, "rir": use_rir, "biquad": use_bq}
    return noisy, clean, noise


def make_batch(triples, dtype=np.float32):
    """Stack equal-length triples into ``(noisy, clean, noise)`` arrays ``[B, N]``."""
    lengths = {len(t[0]) for t in triples}
    if len(lengths) != 1:
        raise DataError(f"batch items differ in length: {sorted(lengths)}")
    return tuple(np.stack([t[i] for t in triples]).astype(dtype) for i in range(3))


# --------------------------------------------------------------- schedule
def lr_schedule(val_history, lr0: float = 1e-3, decay: float = 0.5) -> float:
    """Halve (by ``decay``) once for every validation loss that rose."""
    lr = lr0
    for prev, cur in zip(val_history, val_history[1:]):
        if cur > prev:
            lr *= decay
    return lr


# ------------------------------------------------------------------ steps
@dataclass
class Optimizer:
    lr: float = 1e-3
    clip_norm: float = 5.0
    state: AdamState = field(default_factory=AdamState)

    def step(self, params: dict, grads: dict) -> float:
        norm = clip_grad_norm(grads, self.clip_norm)
        adam_step(params, grads, self.state, lr=self.lr)
        return norm


def batch_labels(clean, noise, state: SnrLabelState, update: bool = True) -> np.ndarray:
    """Per-frame SNR targets ``[B, T]``; the running stats see items in order."""
    out = []
    for c, n in zip(clean, noise):
        xi = snr_label_raw(dsp.stft(c.astype(np.float64)), dsp.stft(n.astype(np.float64)))
        if update:
            update_label_stats(state, xi)
        out.append(normalize_compress(xi, state))
    return np.stack(out)


def batch_loss(model: DCCRNPlus, batch, label_state: SnrLabelState, delta: float, update_labels: bool = True):
    noisy, clean, noise = batch
    labels = batch_labels(clean, noise, label_state, update_labels)
    enh, snr = model.forward(dsp.stft(noisy))
    est = istft_tensor(enh)
    ref = dsp.istft(dsp.stft(clean)).astype(est.dtype)
    return combined_loss(est, ref, snr, labels, delta)


def _diagnostics(model: DCCRNPlus, noisy) -> dict:
    model.probe = {}
    try:
        with ad.no_grad():
            model.forward(dsp.stft(noisy))
        return dict(model.probe)
    finally:
        model.probe = None


def train_step(batch, model: DCCRNPlus, label_state: SnrLabelState, opt: Optimizer, delta: float = 30.0) -> dict:
    """Forward, combined loss, backward, clipped Adam update; returns metrics."""
    model.train()
    model.zero_grad()
    total, l_si, l_snr = batch_loss(model, batch, label_state, delta)
    if not np.isfinite(total.item()):
        diag = _diagnostics(model, batch[0])
        raise NumericalError(f"non-finite loss {total.item()}", diag)
    total.backward()
    params = model.parameters()
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    try:
        gnorm = opt.step(params, grads)
    except ad.NonFiniteGradient as exc:
        raise NumericalError(str(exc), _diagnostics(model, batch[0])) from exc
    return {"loss": total.item(), "si_snr": l_si.item(), "snr_mse": l_snr.item(), "lr": opt.lr, "grad_norm": gnorm}


def si_snr_db(est, ref) -> float:
    """Plain SI-SNR in dB (higher is better) of 1-D signals."""
    est, ref = np.asarray(est, np.float64), np.asarray(ref, np.float64)
    s = np.dot(est, ref) / np.dot(ref, ref) * ref
    e = est - s
    return float(10 * np.log10(np.dot(s, s) / max(np.dot(e, e), 1e-20)))


def evaluate_si_snr(model: DCCRNPlus, triples) -> tuple:
    """Mean SI-SNR (dB) of model output and of the noisy input vs the clean reference."""
    model.eval()
    out_db, in_db = [], []
    for noisy, clean, _ in triples:
        ref = dsp.istft(dsp.stft(np.asarray(clean, np.float64)))
        enh = dsp.istft(model.enhance(dsp.stft(noisy)))
        out_db.append(si_snr_db(enh, ref))
        in_db.append(si_snr_db(np.asarray(noisy, np.float64)[:len(ref)], ref))
    return float(np.mean(out_db)), float(np.mean(in_db))


# ---------------------------------------------------------------- trainer
class Trainer:
    """Owns model, optimizer and label statistics; ``batch_fn(step)`` supplies data.

    Data for step ``s`` must depend only on ``s`` (and fixed seeds), which makes
    a resumed run reproduce the uninterrupted one exactly.
    """

    def __init__(self, model: DCCRNPlus, cfg: TrainConfig, batch_fn, val_batches=()):
        self.model, self.cfg, self.batch_fn = model, cfg, batch_fn
        self.val_batches = list(val_batches)
        self.opt = Optimizer(cfg.lr, cfg.clip_norm)
        self.labels = SnrLabelState(alpha=cfg.alpha)
        self.step_no = 0
        self.val_history: list = []

    def validate(self) -> float:
        self.model.eval()
        with ad.no_grad():
            losses = [batch_loss(self.model, b, self.labels, self.cfg.delta, update_labels=False)[0].item()
                      for b in self.val_batches]
        self.model.train()
        return float(np.mean(losses))

    def step(self) -> dict:
        metrics = train_step(self.batch_fn(self.step_no), self.model, self.labels, self.opt, self.cfg.delta)
        self.step_no += 1
        metrics["step"] = self.step_no
        if self.val_batches and self.step_no % self.cfg.val_every == 0:
            val = self.validate()
            self.val_history.append(val)
            self.opt.lr = lr_schedule(self.val_history, self.cfg.lr, self.cfg.lr_decay)
            metrics["val_loss"] = val
        return metrics

    def fit(self, steps: int | None = None, callback=None) -> list:
        history = []
        for _ in range(self.cfg.steps if steps is None else steps):
            m = self.step()
            history.append(m)
            if callback is not None:
                callback(m)
        return history

    # ----------------------------------------------------------- persistence
    def save(self, path) -> None:
        save_checkpoint(
            path,
            self.model,
            header={
                "step": self.step_no,
                "lr": self.opt.lr,
                "adam_step": self.opt.state.step,
                "label_mu": self.labels.mu,
                "label_sigma": self.labels.sigma,
                "label_alpha": self.labels.alpha,
                "label_initialized": int(self.labels.initialized),
                "val_history": self.val_history,
                **{f"train.{f.name}": getattr(self.cfg, f.name) for f in fields(self.cfg)},
            },
            extra={**{f"adam.m.{k}": v for k, v in self.opt.state.m.items()},
                   **{f"adam.v.{k}": v for k, v in self.opt.state.v.items()}},
        )

    @classmethod
    def restore(cls, path, cfg: TrainConfig, batch_fn, val_batches=()) -> "Trainer":
        model, header, extra = load_checkpoint(path)
        tr = cls(model, cfg, batch_fn, val_batches)
        tr.step_no = int(header.get("step", 0))
        tr.opt.lr = float(header.get("lr", cfg.lr))
        tr.opt.state.step = int(header.get("adam_step", 0))
        tr.opt.state.m = {k[len("adam.m."):]: v for k, v in extra.items() if k.startswith("adam.m.")}
        tr.opt.state.v = {k[len("adam.v."):]: v for k, v in extra.items() if k.startswith("adam.v.")}
        tr.labels = SnrLabelState(
            float(header.get("label_mu", 0.0)),
            float(header.get("label_sigma", 0.0)),
            float(header.get("label_alpha", cfg.alpha)),
            bool(int(header.get("label_initialized", 0))),
        )
        hist = header.get("val_history", "")
        tr.val_history = [float(v) for v in hist.split(",") if v] if isinstance(hist, str) else list(hist)
        return tr


def default_model(preset: str = "toy", seed: int = 0) -> DCCRNPlus:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    return DCCRNPlus(PRESETS[preset](), seed=seed)

