"""Complex-valued layers built from pairs of real tensors.

Activations are :class:`ComplexTensor` with ``re``/``im`` of identical shape.
Every complex weight acts through the complex product

    re_out = W_re * x_re - W_im * x_im,    im_out = W_re * x_im + W_im * x_re

where ``*`` is a convolution, transposed convolution or matrix product.
Convolutions are causal in time: the caller hands over the last ``k_t - 1``
input frames of the previous chunk (zeros at stream start), so a whole
utterance and a frame-by-frame stream go through identical arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .module import Module, buffer, param

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class ComplexTensor:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        self.re = ad.as_tensor(self.re)
        self.im = ad.as_tensor(self.im)
        if self.re.shape != self.im.shape:
            raise ad.ShapeError(f"real/imag shapes differ: {self.re.shape} vs {self.im.shape}")

    @classmethod
    def from_complex(cls, z, dtype=None) -> "ComplexTensor":
        z = np.asarray(z)
        dtype = dtype or ad.get_default_dtype()
        return cls(Tensor(np.ascontiguousarray(z.real, dtype=dtype)), Tensor(np.ascontiguousarray(z.imag, dtype=dtype)))

    @classmethod
    def zeros(cls, shape, dtype=None) -> "ComplexTensor":
        dtype = dtype or ad.get_default_dtype()
        return cls(Tensor(np.zeros(shape, dtype)), Tensor(np.zeros(shape, dtype)))

    @property
    def shape(self):
        return self.re.shape

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    def __getitem__(self, idx) -> "ComplexTensor":
        return ComplexTensor(self.re[idx], self.im[idx])

    def __add__(self, other: "ComplexTensor") -> "ComplexTensor":
        return ComplexTensor(self.re + other.re, self.im + other.im)

    def __mul__(self, other: "ComplexTensor") -> "ComplexTensor":
        return ComplexTensor(self.re * other.re - self.im * other.im, self.re * other.im + self.im * other.re)

    def map(self, fn) -> "ComplexTensor":
        return ComplexTensor(fn(self.re), fn(self.im))

    def reshape(self, *shape) -> "ComplexTensor":
        return ComplexTensor(self.re.reshape(*shape), self.im.reshape(*shape))

    def transpose(self, *axes) -> "ComplexTensor":
        return ComplexTensor(self.re.transpose(*axes), self.im.transpose(*axes))

    def detach(self) -> "ComplexTensor":
        return ComplexTensor(self.re.detach(), self.im.detach())


def cconcat(items, axis: int) -> ComplexTensor:
    return ComplexTensor(ad.concat([c.re for c in items], axis), ad.concat([c.im for c in items], axis))


def cmatmul(x: ComplexTensor, w_re, w_im) -> ComplexTensor:
    return ComplexTensor(ad.matmul(x.re, w_re) - ad.matmul(x.im, w_im), ad.matmul(x.re, w_im) + ad.matmul(x.im, w_re))


def _conv_block(w_re: Tensor, w_im: Tensor, transposed: bool) -> Tensor:
    # [[Wr, -Wi], [Wi, Wr]] over (out, in) for conv; the (in, out) transpose layout for deconv
    if transposed:
        top = ad.concat([w_re, w_im], axis=1)
        bottom = ad.concat([-w_im, w_re], axis=1)
    else:
        top = ad.concat([w_re, -w_im], axis=1)
        bottom = ad.concat([w_im, w_re], axis=1)
    return ad.concat([top, bottom], axis=0)


def complex_conv2d(x: ComplexTensor, w_re, w_im, b_re=None, b_im=None, stride=(1, 1), padding=None) -> ComplexTensor:
    """Complex cross-correlation of ``[B, C_in, T, F]`` input with ``[C_out, C_in, k_t, k_f]`` kernels."""
    cout = w_re.shape[0]
    w = _conv_block(w_re, w_im, transposed=False)
    bias = None if b_re is None else ad.concat([b_re, b_im], axis=0)
    out = ad.conv2d(ad.concat([x.re, x.im], axis=1), w, bias, stride=stride, padding=padding)
    return ComplexTensor(out[:, :cout], out[:, cout:])


def complex_conv_transpose2d(x: ComplexTensor, w_re, w_im, b_re=None, b_im=None, stride=(1, 1), crop=None) -> ComplexTensor:
    """Complex transposed convolution with ``[C_in, C_out, k_t, k_f]`` kernels."""
    cout = w_re.shape[1]
    w = _conv_block(w_re, w_im, transposed=True)
    bias = None if b_re is None else ad.concat([b_re, b_im], axis=0)
    out = ad.conv_transpose2d(ad.concat([x.re, x.im], axis=1), w, bias, stride=stride, crop=crop)
    return ComplexTensor(out[:, :cout], out[:, cout:])


def _with_history(x: ComplexTensor, hist: ComplexTensor | None, n: int) -> ComplexTensor:
    if n == 0:
        return x
    if hist is None:
        b, c, _, f = x.shape
        hist = ComplexTensor.zeros((b, c, n, f), dtype=x.re.dtype)
    return cconcat([hist, x], axis=2)


def _tail(x: ComplexTensor, n: int) -> ComplexTensor | None:
    if n == 0:
        return None
    # stays on the graph: the offline pass flushes its last frame from this history
    t = x.shape[2]
    return x[:, :, t - n:]


def _init_std(fan_in: int) -> float:
    return 1.0 / np.sqrt(2.0 * fan_in)


class ComplexConv2d(Module):
    """Causal-in-time complex conv.  ``kernel``/``stride`` are ``(time, freq)``."""

    def __init__(self, cin, cout, kernel=(2, 5), stride=(1, 2), freq_pad=(2, 2), rng=None):
        rng = rng or np.random.default_rng(0)
        kt, kf = kernel
        std = _init_std(cin * kt * kf)
        self.w_re = param(rng.standard_normal((cout, cin, kt, kf)) * std)
        self.w_im = param(rng.standard_normal((cout, cin, kt, kf)) * std)
        self.b_re = param(np.zeros(cout))
        self.b_im = param(np.zeros(cout))
        self.kernel, self.stride, self.freq_pad = tuple(kernel), tuple(stride), tuple(freq_pad)

    @property
    def history(self) -> int:
        return self.kernel[0] - 1

    def __call__(self, x: ComplexTensor, hist: ComplexTensor | None = None):
        """Returns ``(y, new_hist)``; ``new_hist`` feeds the next chunk."""
        xc = _with_history(x, hist, self.history)
        y = complex_conv2d(xc, self.w_re, self.w_im, self.b_re, self.b_im, self.stride, ((0, 0), self.freq_pad))
        return y, _tail(xc, self.history)


class ComplexConvTranspose2d(Module):
    """Causal-in-time complex transposed conv: output frame t reads input frames t-k_t+1..t."""

    def __init__(self, cin, cout, kernel=(2, 5), stride=(1, 2), freq_crop=(2, 1), rng=None):
        rng = rng or np.random.default_rng(0)
        kt, kf = kernel
        std = _init_std(cin * kt * kf // (stride[0] * stride[1]))
        self.w_re = param(rng.standard_normal((cin, cout, kt, kf)) * std)
        self.w_im = param(rng.standard_normal((cin, cout, kt, kf)) * std)
        self.b_re = param(np.zeros(cout))
        self.b_im = param(np.zeros(cout))
        self.kernel, self.stride, self.freq_crop = tuple(kernel), tuple(stride), tuple(freq_crop)

    @property
    def history(self) -> int:
        return self.kernel[0] - 1

    def __call__(self, x: ComplexTensor, hist: ComplexTensor | None = None):
        n = self.history
        xc = _with_history(x, hist, n)
        # full time length is T + 2n; dropping n at each end keeps the causal taps
        y = complex_conv_transpose2d(xc, self.w_re, self.w_im, self.b_re, self.b_im, self.stride, ((n, n), self.freq_crop))
        return y, _tail(xc, n)


class ComplexBatchNorm(Module):
    """Batch normalization applied to the real and imaginary planes separately."""

    def __init__(self, channels):
        self.g_re = param(np.ones(channels))
        self.g_im = param(np.ones(channels))
        self.b_re = param(np.zeros(channels))
        self.b_im = param(np.zeros(channels))
        self.mean_re = buffer(np.zeros(channels))
        self.mean_im = buffer(np.zeros(channels))
        self.var_re = buffer(np.ones(channels))
        self.var_im = buffer(np.ones(channels))

    def _plane(self, x: Tensor, g, b, rmean: Tensor, rvar: Tensor) -> Tensor:
        shape = (-1, 1, 1)
        if self.training:
            mu = ad.mean(x, axis=(0, 2, 3), keepdims=True)
            v = ad.var(x, axis=(0, 2, 3), keepdims=True)
            n = x.size // x.shape[1]
            unbiased = v.data.reshape(-1) * (n / max(n - 1, 1))
            rmean.data = ((1 - BN_MOMENTUM) * rmean.data + BN_MOMENTUM * mu.data.reshape(-1)).astype(rmean.dtype)
            rvar.data = ((1 - BN_MOMENTUM) * rvar.data + BN_MOMENTUM * unbiased).astype(rvar.dtype)
            xn = (x - mu) / ad.sqrt(v + BN_EPS)
        else:
            scale = 1.0 / np.sqrt(rvar.data + BN_EPS)
            xn = (x - Tensor(rmean.data.reshape(shape))) * Tensor(scale.reshape(shape).astype(x.dtype))
        return xn * g.reshape(shape) + b.reshape(shape)

    def __call__(self, x: ComplexTensor) -> ComplexTensor:
        return ComplexTensor(
            self._plane(x.re, self.g_re, self.b_re, self.mean_re, self.var_re),
            self._plane(x.im, self.g_im, self.b_im, self.mean_im, self.var_im),
        )


class PReLU(Module):
    def __init__(self, init=0.25):
        self.slope = param(np.array([init]))

    def __call__(self, x: ComplexTensor) -> ComplexTensor:
        return ComplexTensor(ad.prelu(x.re, self.slope), ad.prelu(x.im, self.slope))


class ComplexLinear(Module):
    """Complex linear projection (no modulus, no bias) over the last axis."""

    def __init__(self, n_in, n_out, rng=None):
        rng = rng or np.random.default_rng(0)
        std = _init_std(n_in)
        self.w_re = param(rng.standard_normal((n_in, n_out)) * std)
        self.w_im = param(rng.standard_normal((n_in, n_out)) * std)

    def __call__(self, x: ComplexTensor) -> ComplexTensor:
        return clp(x, self.w_re, self.w_im)


def clp(x: ComplexTensor, w_re, w_im) -> ComplexTensor:
    return cmatmul(x, w_re, w_im)


class LSTM(Module):
    """Real single-layer LSTM, time-major ``[T, B, I]``."""

    def __init__(self, n_in, hidden, rng=None):
        rng = rng or np.random.default_rng(0)
        k = 1.0 / np.sqrt(hidden)
        self.w_ih = param(rng.uniform(-k, k, (n_in, 4 * hidden)))
        self.w_hh = param(rng.uniform(-k, k, (hidden, 4 * hidden)))
        self.bias = param(rng.uniform(-k, k, 4 * hidden))
        self.hidden = hidden

    def __call__(self, x: Tensor, state=None, reverse=False):
        h0, c0 = state if state is not None else (None, None)
        return ad.lstm(x, self.w_ih, self.w_hh, self.bias, h0, c0, reverse=reverse)


class ComplexLSTM(Module):
    """Separate real LSTMs on the real and imaginary parts, outputs paired."""

    def __init__(self, n_in, hidden, rng=None):
        rng = rng or np.random.default_rng(0)
        self.lstm_re = LSTM(n_in, hidden, rng)
        self.lstm_im = LSTM(n_in, hidden, rng)

    def __call__(self, x: ComplexTensor, state=None):
        s_re, s_im = state if state is not None else (None, None)
        h_re, f_re = self.lstm_re(x.re, s_re)
        h_im, f_im = self.lstm_im(x.im, s_im)
        return ComplexTensor(h_re, h_im), (f_re, f_im)


class ComplexBLSTM(Module):
    """Bidirectional version; each part concatenates forward and backward states."""

    def __init__(self, n_in, hidden, rng=None):
        rng = rng or np.random.default_rng(0)
        self.fwd_re = LSTM(n_in, hidden, rng)
        self.bwd_re = LSTM(n_in, hidden, rng)
        self.fwd_im = LSTM(n_in, hidden, rng)
        self.bwd_im = LSTM(n_in, hidden, rng)

    def __call__(self, x: ComplexTensor) -> ComplexTensor:
        re = ad.concat([self.fwd_re(x.re)[0], self.bwd_re(x.re, reverse=True)[0]], axis=-1)
        im = ad.concat([self.fwd_im(x.im)[0], self.bwd_im(x.im, reverse=True)[0]], axis=-1)
        return ComplexTensor(re, im)


class ComplexTfLstm(Module):
    """Frequency-then-time recurrent block over an encoder map ``[B, C, T, F]``.

    For each frame a complex BLSTM scans the F positions and a complex linear
    projection maps its output to ``proj`` units; for each F position a
    unidirectional complex LSTM then scans time and a second projection maps
    back to ``C`` channels.  Only the time LSTM carries state across chunks.
    """

    def __init__(self, channels, hidden, proj, rng=None):
        rng = rng or np.random.default_rng(0)
        self.f_blstm = ComplexBLSTM(channels, hidden, rng)
        self.clp_f = ComplexLinear(2 * hidden, proj, rng)
        self.t_lstm = ComplexLSTM(proj, hidden, rng)
        self.clp_t = ComplexLinear(hidden, channels, rng)

    def __call__(self, e: ComplexTensor, state=None):
        b, c, t, f = e.shape
        u = e.transpose(3, 0, 2, 1).reshape(f, b * t, c)
        o_f = self.clp_f(self.f_blstm(u))
        p = o_f.shape[-1]
        seq = o_f.reshape(f, b, t, p).transpose(2, 1, 0, 3).reshape(t, b * f, p)
        h, new_state = self.t_lstm(seq, state)
        o_t = self.clp_t(h)
        return o_t.reshape(t, b, f, c).transpose(1, 3, 0, 2), new_state
