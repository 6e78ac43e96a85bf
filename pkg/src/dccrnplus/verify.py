"""Self-check suite behind ``dccrnplus verify``.

Each check is small enough to run in seconds and compares the library
against an independent construction: finite differences, explicit complex
multiply-accumulate loops, a hand-unrolled LSTM, direct band sums, and
perturbation of future input frames.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dsp
from .autodiff import Tensor
from .autodiff.gradcheck import check_gradients
from .complex_blocks import ComplexConv2d, ComplexConvTranspose2d, ComplexTensor, clp
from .model import DCCRNPlus, ModelConfig
from .postproc import G_MIN, expint_e1, mmse_lsa_gain
from .streaming import latency_report
from .subband import Subband


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} value={self.value:.3e} limit={self.limit:.1e} ({self.seconds:.2f}s)"


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.ravel(a - b)) / max(np.linalg.norm(np.ravel(b)), 1e-300))


def _ct(z):
    return ComplexTensor.from_complex(z, np.float64)


def _tiny(seed=0) -> DCCRNPlus:
    with ad.default_dtype(np.float64):
        m = DCCRNPlus(ModelConfig.tiny(), seed=seed)
    rng = np.random.default_rng(seed + 1)
    for name, t in m.named_parameters():
        if name.endswith(("b_re", "b_im")):
            t.data[...] += rng.uniform(-0.2, 0.2, t.shape)
    return m.eval()


# ------------------------------------------------------------------ checks
def op_gradients() -> float:
    rng = np.random.default_rng(0)
    errs = []
    x = Tensor(rng.standard_normal((2, 3, 4, 6)), requires_grad=True)
    w = Tensor(rng.standard_normal((4, 3, 2, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal(4), requires_grad=True)
    errs += check_gradients(lambda: ad.tsum(ad.conv2d(x, w, b, (1, 2), ((1, 0), (1, 1))) ** 2), [x, w, b])
    wt = Tensor(rng.standard_normal((3, 4, 2, 3)), requires_grad=True)
    errs += check_gradients(lambda: ad.tsum(ad.conv_transpose2d(x, wt, b, (1, 2), ((1, 1), (1, 0))) ** 2), [x, wt, b])
    s = Tensor(rng.standard_normal((5, 2, 3)), requires_grad=True)
    wi = Tensor(rng.standard_normal((3, 8)) * 0.5, requires_grad=True)
    wh = Tensor(rng.standard_normal((2, 8)) * 0.5, requires_grad=True)
    bb = Tensor(rng.standard_normal(8) * 0.1, requires_grad=True)
    errs += check_gradients(lambda: ad.tsum(ad.lstm(s, wi, wh, bb)[0] ** 2), [s, wi, wh, bb])
    a = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    for f in (ad.exp, ad.log, ad.sqrt, ad.tanh, ad.sigmoid, ad.erf):
        errs += check_gradients(lambda f=f: ad.tsum(f(a) * a), [a])
    return max(errs)


def model_gradients() -> float:
    m = _tiny()
    rng = np.random.default_rng(1)
    y = _crandn(rng, 2, 4, 17)
    w = rng.standard_normal((3, 2, 4, 17))
    params = [p for _, p in m.named_parameters()]

    def fn():
        out, snr = m.forward(y)
        return ad.tsum(out.re * w[0]) + ad.tsum(out.im * w[1]) + ad.tsum(snr * w[2][:, :, 0])

    worst = 0.0
    for mode in (False, True):
        m.train(mode)
        worst = max(worst, max(check_gradients(fn, params, max_entries=2, zero_tol=1e-8)))
    return worst


def stft_round_trip() -> float:
    x = np.random.default_rng(2).uniform(-1, 1, 16000)
    y = dsp.istft(dsp.stft(x))
    fl = dsp.FRAME_LEN
    return float(np.max(np.abs(y[fl:len(y) - fl] - x[fl:len(y) - fl])))


def complex_conv_oracle() -> float:
    rng = np.random.default_rng(3)
    conv = ComplexConv2d(2, 3, rng=rng)
    deconv = ComplexConvTranspose2d(3, 2, rng=rng)
    for layer in (conv, deconv):
        layer.astype(np.float64)
        layer.b_re.data[:] = rng.standard_normal(layer.b_re.shape)
        layer.b_im.data[:] = rng.standard_normal(layer.b_im.shape)
    x = _crandn(rng, 1, 2, 4, 8)
    w = conv.w_re.data + 1j * conv.w_im.data
    bias = conv.b_re.data + 1j * conv.b_im.data
    # causal conv: one zero history frame, freq pad (2, 2), stride (1, 2)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 0), (2, 2)))
    t_out, f_out = 4, (xp.shape[3] - 5) // 2 + 1
    ref = np.zeros((1, 3, t_out, f_out), complex)
    for o in range(3):
        for t in range(t_out):
            for f in range(f_out):
                ref[0, o, t, f] = bias[o] + np.sum(w[o] * xp[0, :, t:t + 2, 2 * f:2 * f + 5])
    got = conv(_ct(x))[0].numpy()
    errs = [_rel(got, ref)]

    z = _crandn(rng, 1, 3, 4, 4)
    wd = deconv.w_re.data + 1j * deconv.w_im.data
    bd = deconv.b_re.data + 1j * deconv.b_im.data
    zp = np.concatenate([np.zeros((1, 3, 1, 4)), z], axis=2)
    full = np.zeros((1, 2, 6, 11), complex)
    for i in range(3):
        for t in range(5):
            for f in range(4):
                full[0, :, t:t + 2, 2 * f:2 * f + 5] += zp[0, i, t, f] * wd[i]
    ref_d = full[:, :, 1:5, 2:10] + bd[None, :, None, None]
    errs.append(_rel(deconv(_ct(z))[0].numpy(), ref_d))

    m = _crandn(rng, 6, 5)
    v = _crandn(rng, 4, 6)
    errs.append(_rel(clp(_ct(v), Tensor(m.real), Tensor(m.imag)).numpy(), v @ m))
    return max(errs)


def complex_lstm_oracle() -> float:
    from .complex_blocks import ComplexLSTM

    rng = np.random.default_rng(4)
    with ad.default_dtype(np.float64):
        layer = ComplexLSTM(3, 4, rng)
    x = _crandn(rng, 5, 2, 3)
    got = layer(_ct(x))[0].numpy()

    def run(l, seq):
        h, c = np.zeros((2, 4)), np.zeros((2, 4))
        out = []
        for t in range(len(seq)):
            z = seq[t] @ l.w_ih.data + h @ l.w_hh.data + l.bias.data
            i, f, g, o = np.split(z, 4, axis=1)
            sig = lambda q: 1 / (1 + np.exp(-q))  # noqa: E731
            c = sig(f) * c + sig(i) * np.tanh(g)
            h = sig(o) * np.tanh(c)
            out.append(h)
        return np.stack(out)

    ref = run(layer.lstm_re, x.real) + 1j * run(layer.lstm_im, x.imag)
    return _rel(got, ref)


def subband_identity() -> float:
    y = _crandn(np.random.default_rng(5), 1, 6, 256)
    sb = Subband(noise=False, norm="none")
    return _rel(sb.merge(sb.normalize(sb.split(_ct(y)))[0]).numpy(), y)


def causality() -> float:
    """Largest change in frames < k-1 when frames >= k are perturbed (must be exactly 0)."""
    m = _tiny()
    y = _crandn(np.random.default_rng(6), 10, 17)
    base = m.enhance(y)
    worst = 0.0
    for k in range(2, 10):
        z = y.copy()
        z[k:] += 5.0
        worst = max(worst, float(np.max(np.abs(m.enhance(z)[:k - 1] - base[:k - 1]))))
    return worst


def streaming_equivalence() -> float:
    m = _tiny()
    y = _crandn(np.random.default_rng(7), 40, 17)
    off = m.enhance(y)
    st = m.new_stream()
    outs = [m.stream_process(st, y[t], t) for t in range(len(y))]
    outs = [o for o in outs if o is not None] + [m.stream_flush(st)]
    return float(np.max(np.abs(np.stack(outs) - off)))


def postproc_gain() -> float:
    """Distance of G(1, 2) from 0.5 exp(E1(1)/2); fails outright on a bound violation."""
    for xi in np.geomspace(1e-6, 1e4, 30):
        for gamma in np.geomspace(1e-3, 1e4, 30):
            g = mmse_lsa_gain(xi, gamma)
            if not G_MIN <= g <= 1.0:
                return float("inf")
    return abs(mmse_lsa_gain(1.0, 2.0) - 0.5 * math.exp(0.5 * expint_e1(1.0)))


def latency_ms() -> float:
    return abs(latency_report(_tiny_full_band())["algorithmic_latency_ms"] - 40.0)


def _tiny_full_band() -> DCCRNPlus:
    # the waveform engine needs the 257-bin spectrum; smallest model that takes it
    return DCCRNPlus(ModelConfig(channels=(8, 16), lstm_hidden=4, clp_units=4, snr_hidden=3)).eval()


CHECKS = [
    ("op gradients", op_gradients, 1e-4),
    ("tiny model gradients", model_gradients, 1e-4),
    ("stft round trip", stft_round_trip, 1e-5),
    ("complex conv/deconv/clp", complex_conv_oracle, 1e-5),
    ("complex lstm", complex_lstm_oracle, 1e-5),
    ("subband identity", subband_identity, 1e-6),
    ("causality (t+1 only)", causality, 0.0),
    ("streaming == offline", streaming_equivalence, 1e-5),
    ("mmse-lsa gain", postproc_gain, 1e-9),
    ("latency 40 ms", latency_ms, 0.0),
]


def run_checks(names=None) -> list:
    results = []
    with ad.default_dtype(np.float64):
        for name, fn, limit in CHECKS:
            if names and name not in names:
                continue
            t0 = time.perf_counter()
            try:
                value = float(fn())
            except Exception:  # a crashing check is a failed check
                value = float("inf")
            results.append(CheckResult(name, value <= limit, value, limit, time.perf_counter() - t0))
    return results
