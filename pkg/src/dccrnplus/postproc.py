"""Frame-level MMSE-LSA gain applied on top of the network output.

For each frame the enhanced spectrum X̂, the noisy input Y and the residual
N̂ = Y - X̂ are reduced to a variance (mean of |.|^2 over bins).  These are
averaged over all frames since the last reset, giving an a-priori SNR
ξ' = mean(x̂)/mean(n̂) and a posterior SNR γ = mean(y)/mean(n̂).  The frame is
scaled by the log-spectral-amplitude gain

    G = ξ'/(1+ξ') * exp(E1(v) / 2),    v = ξ' γ / (1+ξ')

clamped to [G_MIN, 1].  When ξ' more than doubles from one frame to the
next the running averages restart from the current frame, so a sudden change
of condition is not smeared by stale history.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-8
G_MIN = 0.0316  # -30 dB
EULER_GAMMA = 0.5772156649015329

_SERIES_TERMS = 60
_CF_MAX_ITER = 500
_CF_TOL = 1e-16
_TINY = 1e-300


def expint_e1(v: float) -> float:
    """Exponential integral E1(v) for v > 0.

    Power series below 1, modified-Lentz continued fraction from 1 up.
    """
    if v <= 0:
        raise ValueError(f"E1 needs v > 0, got {v}")
    if v < 1.0:
        total, term = 0.0, 1.0
        for k in range(1, _SERIES_TERMS):
            term *= -v / k
            total += term / k
            if abs(term) < 1e-18:
                break
        return -EULER_GAMMA - math.log(v) - total
    b = v + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _CF_MAX_ITER):
        a = -i * i
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            break
    return h * math.exp(-v)


def mmse_lsa_gain(xi: float, gamma: float, g_min: float = G_MIN) -> float:
    if xi < 0 or gamma <= 0:
        raise ValueError(f"need xi >= 0 and gamma > 0, got {xi}, {gamma}")
    if xi == 0:
        return g_min
    v = xi * gamma / (1.0 + xi)
    # E1 underflows to 0 long before exp would overflow
    e1 = expint_e1(v) if v > 1e-300 else float("inf")
    g = xi / (1.0 + xi) * math.exp(min(0.5 * e1, 700.0))
    return float(min(max(g, g_min), 1.0))


@dataclass
class SnrTrack:
    """Running sums since the last reset; means are sum / count."""

    sum_x: float = 0.0
    sum_n: float = 0.0
    sum_y: float = 0.0
    count: int = 0
    prev_xi: float | None = None
    frames: int = 0  # total frames seen, survives resets
    last_vars: tuple = (0.0, 0.0, 0.0)


def _frame_var(z) -> float:
    z = np.asarray(z)
    return float(np.mean(z.real.astype(np.float64) ** 2 + z.imag.astype(np.float64) ** 2))


def update_track(track: SnrTrack, xhat_t, y_t) -> tuple:
    """Fold one frame into ``track``; returns ``(xi, gamma)``."""
    xhat_t, y_t = np.asarray(xhat_t), np.asarray(y_t)
    if xhat_t.shape != y_t.shape:
        raise ValueError(f"frame shapes differ: {xhat_t.shape} vs {y_t.shape}")
    vx, vn, vy = _frame_var(xhat_t), _frame_var(y_t - xhat_t), _frame_var(y_t)
    track.sum_x += vx
    track.sum_n += vn
    track.sum_y += vy
    track.count += 1
    track.frames += 1
    track.last_vars = (vx, vn, vy)
    mx, mn, my = track.sum_x / track.count, track.sum_n / track.count, track.sum_y / track.count
    denom = max(mn, EPS)
    return max(mx / denom, EPS), max(my / denom, EPS)


def rate_of_change(xi: float, prev_xi: float) -> float:
    return (xi - prev_xi) / prev_xi


def maybe_reset(track: SnrTrack, xi: float) -> bool:
    """Restart the running means from the current frame if ξ' more than doubled.

    ``prev_xi`` is updated whether or not a reset happens.
    """
    fired = False
    if track.prev_xi is not None and rate_of_change(xi, track.prev_xi) > 1.0:
        vx, vn, vy = track.last_vars
        track.sum_x, track.sum_n, track.sum_y, track.count = vx, vn, vy, 1
        fired = True
    track.prev_xi = xi
    return fired


def postproc_frame(track: SnrTrack, xhat_t, y_t, g_min: float = G_MIN):
    """One streaming step: returns ``(G * xhat_t, G, reset_fired)``."""
    xi, gamma = update_track(track, xhat_t, y_t)
    g = mmse_lsa_gain(xi, gamma, g_min)
    fired = maybe_reset(track, xi)
    return g * np.asarray(xhat_t), g, fired


def apply_postproc(xhat, y, track: SnrTrack | None = None, g_min: float = G_MIN, return_gains: bool = False):
    """Scale every frame of ``xhat [T, F]`` by its MMSE-LSA gain."""
    xhat, y = np.asarray(xhat), np.asarray(y)
    if xhat.shape != y.shape:
        raise ValueError(f"enhanced {xhat.shape} and noisy {y.shape} spectra are not aligned")
    track = track or SnrTrack()
    out = np.empty_like(xhat)
    gains = np.empty(len(xhat))
    for t in range(len(xhat)):
        out[t], gains[t], _ = postproc_frame(track, xhat[t], y[t], g_min)
    return (out, gains) if return_gains else out
