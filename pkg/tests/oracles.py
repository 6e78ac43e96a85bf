"""Slow, obviously-correct reference implementations used by several test files."""
import numpy as np


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm(x, w_ih, w_hh, b, reverse=False):
    """Textbook LSTM over x [T, B, I], gate order i, f, g, o."""
    t_len, batch, _ = x.shape
    hidden = w_hh.shape[0]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    out = np.zeros((t_len, batch, hidden))
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    for t in order:
        z = x[t] @ w_ih + h @ w_hh + b
        i, f, g, o = (z[:, k * hidden:(k + 1) * hidden] for k in range(4))
        c = sigmoid(f) * c + sigmoid(i) * np.tanh(g)
        h = sigmoid(o) * np.tanh(c)
        out[t] = h
    return out


def complex_conv(x, w, bias, stride, pad_t, pad_f):
    """Complex cross-correlation by explicit multiply-accumulate.

    x [B, Ci, T, F] complex, w [Co, Ci, kt, kf] complex.
    """
    xp = np.pad(x, ((0, 0), (0, 0), pad_t, pad_f))
    b, ci, tp, fp = xp.shape
    co, _, kt, kf = w.shape
    st, sf = stride
    to, fo = (tp - kt) // st + 1, (fp - kf) // sf + 1
    y = np.zeros((b, co, to, fo), dtype=complex)
    for n in range(b):
        for o in range(co):
            for t in range(to):
                for f in range(fo):
                    acc = bias[o]
                    for i in range(ci):
                        for a in range(kt):
                            for c in range(kf):
                                acc += w[o, i, a, c] * xp[n, i, t * st + a, f * sf + c]
                    y[n, o, t, f] = acc
    return y


def complex_deconv(x, w, bias, stride, crop_t, crop_f):
    """Complex transposed convolution by scattering every input sample.

    x [B, Ci, T, F], w [Ci, Co, kt, kf].
    """
    b, ci, t_len, f_len = x.shape
    _, co, kt, kf = w.shape
    st, sf = stride
    full = np.zeros((b, co, (t_len - 1) * st + kt, (f_len - 1) * sf + kf), dtype=complex)
    for n in range(b):
        for i in range(ci):
            for t in range(t_len):
                for f in range(f_len):
                    for o in range(co):
                        full[n, o, t * st:t * st + kt, f * sf:f * sf + kf] += x[n, i, t, f] * w[i, o]
    full = full[:, :, crop_t[0]:full.shape[2] - crop_t[1], crop_f[0]:full.shape[3] - crop_f[1]]
    return full + bias[None, :, None, None]


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel(a, b):
    return np.linalg.norm(np.ravel(a - b)) / max(np.linalg.norm(np.ravel(b)), 1e-300)


def _w(layer):
    return layer.w_re.data + 1j * layer.w_im.data


def _lstm_of(layer, x, reverse=False):
    return lstm(x, layer.w_ih.data, layer.w_hh.data, layer.bias.data, reverse)


def tf_lstm(blk, e):
    """Frequency BLSTM + projection, then time LSTM + projection, on complex e [B, C, T, F]."""
    b, c, t, f = e.shape
    u = e.transpose(3, 0, 2, 1).reshape(f, b * t, c)
    fb = blk.f_blstm
    uf = (np.concatenate([_lstm_of(fb.fwd_re, u.real), _lstm_of(fb.bwd_re, u.real, True)], -1)
          + 1j * np.concatenate([_lstm_of(fb.fwd_im, u.imag), _lstm_of(fb.bwd_im, u.imag, True)], -1))
    of = uf @ _w(blk.clp_f)
    seq = of.reshape(f, b, t, -1).transpose(2, 1, 0, 3).reshape(t, b * f, -1)
    h = _lstm_of(blk.t_lstm.lstm_re, seq.real) + 1j * _lstm_of(blk.t_lstm.lstm_im, seq.imag)
    ot = h @ _w(blk.clp_t)
    return ot.reshape(t, b, f, c).transpose(1, 3, 0, 2)


def deep_filter(mask, y, taps_freq=3):
    """mask [B, K, 2, n_f, T, W] complex, y [B, K, T, W]; past frames before t=0 are zero."""
    b, k, n_t, n_f, t_len, w = mask.shape
    c = n_f // 2
    out = np.zeros((b, k, t_len, w), complex)
    for t in range(t_len):
        for f in range(w):
            for i in range(n_t):
                for j in range(n_f):
                    src_t, src_f = t - i, f - c + j
                    if src_t >= 0 and 0 <= src_f < w:
                        out[:, :, t, f] += mask[:, :, i, j, t, f] * y[:, :, src_t, src_f]
    return out
