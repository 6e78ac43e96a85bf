"""Pure-numpy LSTM recurrence; reference for the compiled kernels."""
import numpy as np
from scipy.special import expit


def lstm_forward(xw, w_hh, h0, c0):
    """Run the recurrence given precomputed input projections ``xw [T, B, 4H]``.

    Returns hidden states, cell states and activated gates, all time-major.
    """
    t_len, b, four_h = xw.shape
    hidden = four_h // 4
    h = np.empty((t_len, b, hidden), xw.dtype)
    c = np.empty((t_len, b, hidden), xw.dtype)
    gates = np.empty_like(xw)
    h_prev, c_prev = h0, c0
    for t in range(t_len):
        z = xw[t] + h_prev @ w_hh
        gt = gates[t]
        expit(z, out=gt)
        gt[:, 2 * hidden:3 * hidden] = np.tanh(z[:, 2 * hidden:3 * hidden])
        i, f, g, o = gt[:, :hidden], gt[:, hidden:2 * hidden], gt[:, 2 * hidden:3 * hidden], gt[:, 3 * hidden:]
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        h[t] = h_prev
        c[t] = c_prev
    return h, c, gates


def lstm_backward(dh, gates, c, c0, w_hh):
    """Backpropagate through time.

    Returns ``(dxw, dh0, dc0)`` where ``dxw`` is the gradient w.r.t. the gate
    pre-activations; weight gradients are formed by the caller.
    """
    t_len, b, hidden = dh.shape
    dxw = np.empty_like(gates)
    dh_next = np.zeros((b, hidden), dh.dtype)
    dc_next = np.zeros((b, hidden), dh.dtype)
    w_t = w_hh.T
    for t in range(t_len - 1, -1, -1):
        gt = gates[t]
        i, f, g, o = gt[:, :hidden], gt[:, hidden:2 * hidden], gt[:, 2 * hidden:3 * hidden], gt[:, 3 * hidden:]
        tc = np.tanh(c[t])
        dht = dh[t] + dh_next
        dct = dc_next + dht * o * (1.0 - tc * tc)
        c_prev = c[t - 1] if t > 0 else c0
        out = dxw[t]
        out[:, :hidden] = dct * g * i * (1.0 - i)
        out[:, hidden:2 * hidden] = dct * c_prev * f * (1.0 - f)
        out[:, 2 * hidden:3 * hidden] = dct * i * (1.0 - g * g)
        out[:, 3 * hidden:] = dht * tc * o * (1.0 - o)
        dc_next = dct * f
        dh_next = out @ w_t
    return dxw, dh_next, dc_next
