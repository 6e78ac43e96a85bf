"""Convolutions and the fused LSTM op.

Layouts: activations are ``[B, C, T, F]`` (a 3-D ``[C, T, F]`` input is
treated as batch 1), conv weights are ``[C_out, C_in, k_t, k_f]`` and
transposed-conv weights ``[C_in, C_out, k_t, k_f]`` so that the same array
gives a conv/transpose adjoint pair.  Padding is explicit per edge:
``((t_before, t_after), (f_before, f_after))``; causal time padding is
``(k_t - 1, 0)``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import _kernels
from .tensor import ShapeError, Tensor, _result, as_tensor


def _im2col(xp: np.ndarray, kt: int, kf: int, st: int, sf: int) -> np.ndarray:
    """``[B, C, Tp, Fp]`` -> ``[B, To, Fo, C*kt*kf]`` (copy)."""
    win = sliding_window_view(xp, (kt, kf), axis=(2, 3))[:, :, ::st, ::sf]
    b, c, to, fo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b, to, fo, c * kt * kf)


def _col2im(cols: np.ndarray, shape: tuple, kt: int, kf: int, st: int, sf: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add ``[B, To, Fo, C, kt, kf]`` into ``shape``."""
    b, c, tp, fp = shape
    to, fo = cols.shape[1], cols.shape[2]
    out = np.zeros(shape, dtype=cols.dtype)
    cols = cols.transpose(0, 3, 4, 5, 1, 2)  # B, C, kt, kf, To, Fo
    for i in range(kt):
        for j in range(kf):
            out[:, :, i:i + st * (to - 1) + 1:st, j:j + sf * (fo - 1) + 1:sf] += cols[:, :, i, j]
    return out


def _norm_pad(padding):
    if padding is None:
        return (0, 0), (0, 0)
    (a, b), (c, d) = padding
    return (int(a), int(b)), (int(c), int(d))


def conv2d(x, w, bias=None, stride=(1, 1), padding=None) -> Tensor:
    """Cross-correlation of ``x`` with ``w`` (no kernel flip)."""
    x, w = as_tensor(x), as_tensor(w)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects [B,C,T,F] input and 4-D weight, got {x.shape}, {w.shape}")
    cout, cin, kt, kf = w.shape
    if xd.shape[1] != cin:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape}, weight {w.shape}")
    st, sf = stride
    (tl, th), (fl, fh) = _norm_pad(padding)
    xp = np.pad(xd, ((0, 0), (0, 0), (tl, th), (fl, fh)))
    if xp.shape[2] < kt or xp.shape[3] < kf:
        raise ShapeError(f"kernel {w.shape[2:]} larger than padded input {xp.shape[2:]}")
    cols = _im2col(xp, kt, kf, st, sf)
    wm = w.data.reshape(cout, -1)
    out = (cols @ wm.T).transpose(0, 3, 1, 2)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[:, None, None]
    out = np.ascontiguousarray(out)
    parents = (x, w) if bias is None else (x, w, bias)

    def backward(g):
        g4 = g[None] if squeeze else g
        gt = g4.transpose(0, 2, 3, 1)  # B, To, Fo, Cout
        gw = (gt.reshape(-1, cout).T @ cols.reshape(-1, cols.shape[-1])).reshape(w.shape)
        gcols = (gt @ wm).reshape(gt.shape[:3] + (cin, kt, kf))
        gxp = _col2im(gcols, xp.shape, kt, kf, st, sf)
        gx = gxp[:, :, tl:tl + xd.shape[2], fl:fl + xd.shape[3]]
        if squeeze:
            gx = gx[0]
        grads = (gx, gw)
        if bias is not None:
            grads = grads + (g4.sum(axis=(0, 2, 3)),)
        return grads

    return _result(out[0] if squeeze else out, parents, backward)


def conv_transpose2d(x, w, bias=None, stride=(1, 1), crop=None) -> Tensor:
    """Transposed convolution: the adjoint of :func:`conv2d` with the same weight.

    ``crop`` removes rows/columns from each edge of the full output, which is
    ``((T-1)*s_t + k_t, (F-1)*s_f + k_f)`` before cropping.  With ``crop``
    equal to a conv's ``padding`` the two ops are exact adjoints whenever the
    conv covered its whole padded input; otherwise reduce the high-side crop.
    """
    x, w = as_tensor(x), as_tensor(w)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv_transpose2d expects [B,C,T,F] input and 4-D weight, got {x.shape}, {w.shape}")
    cin, cout, kt, kf = w.shape
    if xd.shape[1] != cin:
        raise ShapeError(f"conv_transpose2d channel mismatch: input {x.shape}, weight {w.shape}")
    st, sf = stride
    (tl, th), (fl, fh) = _norm_pad(crop)
    b, _, t, f = xd.shape
    full = (b, cout, (t - 1) * st + kt, (f - 1) * sf + kf)
    if full[2] - tl - th < 1 or full[3] - fl - fh < 1:
        raise ShapeError(f"crop {crop} removes the whole output of size {full[2:]}")
    xt = xd.transpose(0, 2, 3, 1)  # B, T, F, Cin
    wm = w.data.reshape(cin, -1)
    cols = (xt @ wm).reshape(b, t, f, cout, kt, kf)
    out = _col2im(cols, full, kt, kf, st, sf)[:, :, tl:full[2] - th, fl:full[3] - fh]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[:, None, None]
    out = np.ascontiguousarray(out)
    parents = (x, w) if bias is None else (x, w, bias)

    def backward(g):
        g4 = g[None] if squeeze else g
        gfull = np.zeros(full, dtype=g.dtype)
        gfull[:, :, tl:full[2] - th, fl:full[3] - fh] = g4
        gcols = _im2col(gfull, kt, kf, st, sf)  # B, T, F, Cout*kt*kf
        gx = (gcols @ wm.T).transpose(0, 3, 1, 2)
        gw = (xt.reshape(-1, cin).T @ gcols.reshape(-1, gcols.shape[-1])).reshape(w.shape)
        if squeeze:
            gx = gx[0]
        grads = (gx, gw)
        if bias is not None:
            grads = grads + (g4.sum(axis=(0, 2, 3)),)
        return grads

    return _result(out[0] if squeeze else out, parents, backward)


def lstm(x, w_ih, w_hh, bias, h0=None, c0=None, reverse: bool = False):
    """Single-layer LSTM over ``x`` of shape ``[T, B, I]``.

    Weights are ``w_ih [I, 4H]``, ``w_hh [H, 4H]``, ``bias [4H]`` with gate
    order (input, forget, cell, output).  ``h0``/``c0`` are plain arrays
    (initial state is not trained).  Returns ``(h_seq, (h_T, c_T))`` where
    ``h_seq`` is a Tensor ``[T, B, H]`` in input time order and the final
    state is a pair of arrays, used for carrying stream state.
    """
    x, w_ih, w_hh, bias = (as_tensor(v) for v in (x, w_ih, w_hh, bias))
    t_len, b, n_in = x.shape
    hidden = w_hh.shape[0]
    if w_ih.shape != (n_in, 4 * hidden) or w_hh.shape != (hidden, 4 * hidden) or bias.shape != (4 * hidden,):
        raise ShapeError(
            f"lstm weight shapes {w_ih.shape}, {w_hh.shape}, {bias.shape} do not fit input {x.shape}"
        )
    dtype = x.dtype
    h0 = np.zeros((b, hidden), dtype) if h0 is None else np.ascontiguousarray(h0, dtype)
    c0 = np.zeros((b, hidden), dtype) if c0 is None else np.ascontiguousarray(c0, dtype)
    xd = x.data[::-1] if reverse else x.data
    whh = np.ascontiguousarray(w_hh.data, dtype)
    xw = np.ascontiguousarray((xd.reshape(-1, n_in) @ w_ih.data + bias.data).reshape(t_len, b, 4 * hidden), dtype)
    h, c, gates = _kernels.lstm_forward(xw, whh, h0, c0)
    final = (h[-1].copy(), c[-1].copy()) if t_len else (h0, c0)
    out = h[::-1] if reverse else h

    def backward(g):
        dh = np.ascontiguousarray(g[::-1] if reverse else g, dtype)
        dxw, dh0, dc0 = _kernels.lstm_backward(dh, gates, c, c0, whh)
        h_prev = np.concatenate([h0[None], h[:-1]], axis=0).reshape(-1, hidden)
        dxw2 = dxw.reshape(-1, 4 * hidden)
        gw_hh = h_prev.T @ dxw2
        gw_ih = xd.reshape(-1, n_in).T @ dxw2
        gbias = dxw2.sum(axis=0)
        gx = (dxw2 @ w_ih.data.T).reshape(t_len, b, n_in)
        if reverse:
            gx = gx[::-1]
        return gx, gw_ih, gw_hh, gbias

    return _result(np.ascontiguousarray(out), (x, w_ih, w_hh, bias), backward), final
