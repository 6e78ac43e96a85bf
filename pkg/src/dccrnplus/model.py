"""The enhancement network and its frame-synchronous streaming engine.

Layout of one forward pass on a ``[B, T, 257]`` noisy spectrum:

* drop the DC bin, split the 256 remaining bins into K learnable subbands and
  normalize them (running statistics by default);
* stack the bands as K complex input channels of a ``T x 64`` map and run
  the complex conv encoder (frequency 64 -> 32 -> 16 -> 8 -> 4);
* complex TF-LSTM bottleneck;
* complex transposed-conv decoder, each layer fed the previous decoder output
  concatenated with a 1x1 complex conv + BN of the mirrored encoder output;
* the last decoder layer emits, per band, a complex 2 x 3 deep-filter kernel
  for every bin, which is applied to the (un-normalized) band signals;
* merge the bands and put back a zero DC bin.

Channel counts in :class:`ModelConfig` are real+imaginary totals, so a layer
listed as 256 carries 128 complex channels.

Every layer is causal in time except the last decoder layer, whose output for
frame t also reads the decoder features of frame t+1.  Offline and streaming
inference both go through :meth:`DCCRNPlus._core`, the offline path simply
hands it the whole utterance at once.
"""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .complex_blocks import (
    LSTM,
    ComplexBatchNorm,
    ComplexConv2d,
    ComplexConvTranspose2d,
    ComplexTensor,
    ComplexTfLstm,
    PReLU,
    cconcat,
)
from .module import Module, param
from .subband import NormState, Subband, SubbandConfig


class StreamStateError(RuntimeError):
    """Frames fed out of order, or fed after flush."""


@dataclass(frozen=True)
class ModelConfig:
    channels: tuple = (32, 64, 128, 256)
    n_bands: int = 4
    n_bins: int = 256
    kernel: tuple = (2, 5)  # (time, freq)
    stride: tuple = (1, 2)
    lstm_hidden: int = 256
    clp_units: int = 128
    snr_hidden: int = 64
    snr_kernel: int = 3
    df_taps_time: int = 2
    df_taps_freq: int = 3
    lookahead_frames: int = 1
    norm: str = "causal"

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if any(c % 2 for c in self.channels):
            raise ValueError(f"channel counts are real+imag totals and must be even: {self.channels}")
        if self.lookahead_frames != 1:
            raise ValueError("the decoder is built for exactly one frame of look-ahead")
        if self.df_taps_freq % 2 != 1:
            raise ValueError("deep-filter frequency taps must be odd (centred)")
        w = self.band_width
        for _ in self.channels:
            if w % self.stride[1]:
                raise ValueError(f"band width {self.band_width} not divisible through {len(self.channels)} layers")
            w //= self.stride[1]

    @property
    def band_width(self) -> int:
        return SubbandConfig(self.n_bands, self.n_bins).band_width

    @property
    def bottleneck_bins(self) -> int:
        return self.band_width // self.stride[1] ** len(self.channels)

    @property
    def n_taps(self) -> int:
        return self.df_taps_time * self.df_taps_freq

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def full(cls) -> "ModelConfig":
        return cls()

    @classmethod
    def toy(cls) -> "ModelConfig":
        return cls(channels=(8, 16, 32, 64), lstm_hidden=32, clp_units=16, snr_hidden=16)

    @classmethod
    def tiny(cls) -> "ModelConfig":
        """Two layers on two 8-bin bands; small enough for exhaustive gradient checks."""
        return cls(channels=(8, 16), n_bands=2, n_bins=16, lstm_hidden=4, clp_units=4, snr_hidden=3)


PRESETS = {"full": ModelConfig.full, "toy": ModelConfig.toy, "tiny": ModelConfig.tiny}


def count_params(params) -> int:
    """Number of trainable scalars in a module or a name -> array mapping."""
    if isinstance(params, Module):
        return params.num_parameters()
    return int(sum(np.asarray(getattr(p, "data", p)).size for p in dict(params).values()))


def apply_deep_filter(mask: ComplexTensor, y_cur: ComplexTensor, y_prev: ComplexTensor, taps_freq: int = 3) -> ComplexTensor:
    """Complex deep filtering of band signals.

    ``mask`` is ``[B, K, n_time, n_freq, T, W]``; ``y_cur`` and ``y_prev`` are
    ``[B, K, T, W]`` band frames at t and t-1.  Output frame t is
    ``sum_{i,j} M[i, j] * Y(f - c + j, t - i)`` with ``c = n_freq // 2`` and
    zero padding at the band edges.
    """
    n_time = mask.shape[2]
    if n_time > 2:
        raise ValueError("only current and previous frame taps are supported")
    c = taps_freq // 2
    width = y_cur.shape[-1]
    out = None
    for i, src in enumerate((y_cur, y_prev)[:n_time]):
        padded = src.map(lambda p: ad.pad(p, ((0, 0), (0, 0), (0, 0), (c, c))))
        for j in range(taps_freq):
            term = mask[:, :, i, j] * padded[:, :, :, j:j + width]
            out = term if out is None else out + term
    return out


@dataclass
class StreamState:
    """Everything the network carries from one frame to the next."""

    enc_hist: list = field(default_factory=list)
    dec_hist: list = field(default_factory=list)
    lstm: tuple | None = None
    norm: NormState | None = None
    band_hist: ComplexTensor | None = None  # last two split frames, pre-normalization
    frames_in: int = 0
    flushed: bool = False
    track: object = None  # post-processor state, owned by the caller

    def reset(self) -> None:
        self.__init__()


class SnrHead(Module):
    """Frame SNR estimator: pooled TF-LSTM output -> LSTM -> causal conv1d -> sigmoid."""

    def __init__(self, n_in, hidden, kernel, rng):
        self.lstm = LSTM(n_in, hidden, rng)
        self.w = param(rng.standard_normal((kernel * hidden, 1)) / np.sqrt(kernel * hidden))
        self.b = param(np.zeros(1))
        self.kernel = kernel

    def __call__(self, o: ComplexTensor) -> Tensor:
        b, c, t, f = o.shape
        pooled = ad.concat([ad.mean(o.re, axis=3), ad.mean(o.im, axis=3)], axis=1)  # B, 2C, T
        h, _ = self.lstm(pooled.transpose(2, 0, 1))  # T, B, H
        hp = ad.pad(h, ((self.kernel - 1, 0), (0, 0), (0, 0)))
        taps = ad.concat([hp[k:k + t] for k in range(self.kernel)], axis=2)  # T, B, k*H
        z = ad.matmul(taps, self.w) + self.b
        return ad.sigmoid(z).reshape(t, b).transpose(1, 0)


class DCCRNPlus(Module):
    def __init__(self, cfg: ModelConfig = ModelConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        cplx = [c // 2 for c in cfg.channels]
        self.subband = Subband(SubbandConfig(cfg.n_bands, cfg.n_bins), norm=cfg.norm, rng=rng)

        ins = [cfg.n_bands] + cplx[:-1]
        self.enc = [ComplexConv2d(i, o, cfg.kernel, cfg.stride, (2, 2), rng) for i, o in zip(ins, cplx)]
        self.enc_bn = [ComplexBatchNorm(o) for o in cplx]
        self.enc_act = [PReLU() for _ in cplx]

        self.tf_lstm = ComplexTfLstm(cplx[-1], cfg.lstm_hidden, cfg.clp_units, rng)

        self.skip = [ComplexConv2d(c, c, (1, 1), (1, 1), (0, 0), rng) for c in reversed(cplx)]
        self.skip_bn = [ComplexBatchNorm(c) for c in reversed(cplx)]
        dec_out = list(reversed(cplx[:-1])) + [cfg.n_bands * cfg.n_taps]
        dec_in = [2 * c for c in reversed(cplx)]
        self.dec = [ComplexConvTranspose2d(i, o, cfg.kernel, cfg.stride, (2, 1), rng) for i, o in zip(dec_in, dec_out)]
        self.dec_bn = [ComplexBatchNorm(o) for o in dec_out[:-1]]
        self.dec_act = [PReLU() for _ in dec_out[:-1]]
        self._identity_mask_bias()

        self.snr = SnrHead(2 * cplx[-1], cfg.snr_hidden, cfg.snr_kernel, rng)
        self.timers: dict | None = None
        self.probe: dict | None = None

    def _identity_mask_bias(self) -> None:
        # start as a pass-through filter: centre tap of the current frame = 1
        last = self.dec[-1]
        b = last.b_re.data.reshape(self.cfg.n_bands, self.cfg.df_taps_time, self.cfg.df_taps_freq)
        b[:, 0, self.cfg.df_taps_freq // 2] = 1.0

    # ------------------------------------------------------------------ timing
    @contextmanager
    def _stage(self, name: str):
        if self.timers is None:
            yield
            return
        t0 = time.perf_counter()
        yield
        self.timers[name] = self.timers.get(name, 0.0) + time.perf_counter() - t0

    def _note(self, name: str, x: ComplexTensor) -> None:
        if self.probe is not None:
            self.probe[name] = float(np.sqrt(np.sum(x.re.data.astype(np.float64) ** 2 + x.im.data.astype(np.float64) ** 2)))

    # -------------------------------------------------------------- core pass
    def _net_input(self, spec) -> ComplexTensor:
        if isinstance(spec, ComplexTensor):
            y = spec
        else:
            spec = np.asarray(spec)
            if spec.ndim == 2:
                spec = spec[None]
            y = ComplexTensor.from_complex(spec, dtype=self.dtype)
        if y.re.ndim != 3 or y.shape[-1] != self.cfg.n_bins + 1:
            raise ShapeError(f"model input must be [B, T, {self.cfg.n_bins + 1}], got {y.shape}")
        return y[:, :, 1:]

    def _core(self, y: ComplexTensor, st: StreamState):
        """Run T new frames through the network.

        Returns ``(masks, o)`` where ``masks`` holds the deep-filter kernels
        for frames ``frames_in - 1 .. frames_in + T - 2`` and ``o`` is the
        TF-LSTM output for the T new frames.
        """
        cfg = self.cfg
        with self._stage("subband"):
            bands = self.subband.split(y)
            x, st.norm = self.subband.normalize(bands, st.norm)
            self._note("subband.split", bands)
            self._note("subband.norm", x)

        with self._stage("encoder"):
            skips = []
            if not st.enc_hist:
                st.enc_hist = [None] * len(self.enc)
            for l, (conv, bn, act) in enumerate(zip(self.enc, self.enc_bn, self.enc_act)):
                x, st.enc_hist[l] = conv(x, st.enc_hist[l])
                x = act(bn(x))
                skips.append(x)
                self._note(f"enc.{l}", x)

        with self._stage("tf_lstm"):
            o, st.lstm = self.tf_lstm(x, st.lstm)
            self._note("tf_lstm", o)

        with self._stage("decoder"):
            if not st.dec_hist:
                st.dec_hist = [None] * len(self.dec)
            d = o
            n = len(self.dec)
            for l in range(n):
                s, _ = self.skip[l](skips[n - 1 - l])
                d = cconcat([d, self.skip_bn[l](s)], axis=1)
                d, st.dec_hist[l] = self.dec[l](d, st.dec_hist[l])
                if l < n - 1:
                    d = self.dec_act[l](self.dec_bn[l](d))
                self._note(f"dec.{l}", d)
        return bands, d, o

    def _masks(self, d: ComplexTensor) -> ComplexTensor:
        b, _, t, w = d.shape
        cfg = self.cfg
        return d.reshape(b, cfg.n_bands, cfg.df_taps_time, cfg.df_taps_freq, t, w)

    def _filter(self, bands: ComplexTensor, d: ComplexTensor, st: StreamState) -> ComplexTensor:
        """Deep-filter the frames the new masks refer to; updates the band history."""
        b, k, t, w = bands.shape
        hist = st.band_hist
        if hist is None:
            hist = ComplexTensor.zeros((b, k, 2, w), dtype=bands.re.dtype)
        ext = cconcat([hist, bands], axis=2)  # frames t0-2 .. t0+T-1
        out = apply_deep_filter(self._masks(d), ext[:, :, 1:t + 1], ext[:, :, 0:t], self.cfg.df_taps_freq)
        st.band_hist = ext[:, :, t:].detach()
        return out

    def _flush_masks(self, st: StreamState, batch: int) -> ComplexTensor:
        last = self.dec[-1]
        cin = last.w_re.shape[0]
        width = self.cfg.band_width // 2
        zero = ComplexTensor.zeros((batch, cin, 1, width), dtype=last.w_re.dtype)
        d, st.dec_hist[-1] = last(zero, st.dec_hist[-1])
        return d

    def _output(self, x: ComplexTensor) -> ComplexTensor:
        with self._stage("subband"):
            merged = self.subband.merge(x)
            b, t, _ = merged.shape
            dc = ComplexTensor.zeros((b, t, 1), dtype=merged.re.dtype)
            return cconcat([dc, merged], axis=2)

    # --------------------------------------------------------------- offline
    def forward(self, spec, with_snr: bool = True):
        """Offline pass over whole utterances.

        ``spec`` is complex ``[B, T, F]`` (or ``[T, F]``) or a ComplexTensor.
        Returns ``(enhanced ComplexTensor [B, T, F], snr Tensor [B, T] or None)``.
        """
        y = self._net_input(spec)
        st = StreamState()
        bands, d, o = self._core(y, st)
        with self._stage("decoder"):
            d_last = self._flush_masks(st, y.shape[0])
            d_all = cconcat([d[:, :, 1:], d_last], axis=2)
        with self._stage("deep_filter"):
            hist = ComplexTensor.zeros((bands.shape[0], bands.shape[1], 1, bands.shape[3]), dtype=bands.re.dtype)
            prev = cconcat([hist, bands[:, :, :-1]], axis=2)
            x = apply_deep_filter(self._masks(d_all), bands, prev, self.cfg.df_taps_freq)
        out = self._output(x)
        snr = None
        if with_snr:
            with self._stage("snr_head"):
                snr = self.snr(o)
        return out, snr

    __call__ = forward

    def enhance(self, spec) -> np.ndarray:
        """Inference helper: complex numpy in, complex numpy out (same rank)."""
        spec = np.asarray(spec)
        with ad.no_grad():
            out, _ = self.forward(spec, with_snr=False)
        z = out.numpy()
        return z[0] if spec.ndim == 2 else z

    # ------------------------------------------------------------- streaming
    def new_stream(self) -> StreamState:
        return StreamState()

    def stream_process(self, st: StreamState, frame, index: int | None = None):
        """Feed one ``[F]`` (or ``[B, F]``) STFT frame.

        Returns the enhanced previous frame, or ``None`` for the first frame.
        ``index`` (optional) must equal the number of frames fed so far.
        """
        if st.flushed:
            raise StreamStateError("stream already flushed; reset it first")
        if index is not None and index != st.frames_in:
            raise StreamStateError(f"expected frame {st.frames_in}, got {index}")
        frame = np.asarray(frame)
        spec = frame[None, None] if frame.ndim == 1 else frame[:, None]
        with ad.no_grad():
            y = self._net_input(spec)
            bands, d, _ = self._core(y, st)
            with self._stage("deep_filter"):
                x = self._filter(bands, d, st)
            first = st.frames_in == 0
            st.frames_in += 1
            if first:
                return None
            out = self._output(x).numpy()[:, 0]
        return out[0] if frame.ndim == 1 else out

    def stream_flush(self, st: StreamState):
        """Emit the last pending frame (its look-ahead frame treated as silent)."""
        if st.flushed:
            raise StreamStateError("stream already flushed")
        st.flushed = True
        if st.frames_in == 0:
            return None
        with ad.no_grad():
            batch = st.band_hist.shape[0]
            d = self._flush_masks(st, batch)
            cur, prev = st.band_hist[:, :, 1:], st.band_hist[:, :, :1]
            x = apply_deep_filter(self._masks(d), cur, prev, self.cfg.df_taps_freq)
            out = self._output(x).numpy()[:, 0]
        return out[0] if batch == 1 else out

    def param_groups(self) -> dict:
        """Top-level component -> parameter names."""
        groups: dict = {}
        for name, _ in self.named_parameters():
            groups.setdefault(name.split(".")[0], []).append(name)
        return groups
