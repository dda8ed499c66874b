"""One-dimensional periodic heat-kernel averages and log-time quadrature.

Cube averages of grounded kernels on T^4 reduce, through

    G^(s) = 1/Gamma(s) int_0^inf t^(s-1) (p_t - 1) dt,   p_t = prod_k q_t(x_k - y_k),

to products of one-dimensional averages of the periodic heat kernel q_t. Small
times use the image expansion (error functions), large times the Fourier
series; both are truncated far below double precision.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

_REGIME_SWITCH = 0.02
_IMAGES = np.arange(-3, 4)
_MODES = np.arange(1, 11)
_FOUR_PI2 = 4.0 * math.pi**2


def log_time_nodes(t_min: float, t_max: float = 2.0, step: float = 0.1):
    """Trapezoid nodes in s = log t; returns (t, weights) for int f(t) dt."""
    s = np.arange(math.log(t_min), math.log(t_max) + step, step)
    t = np.exp(s)
    w = np.full_like(t, step) * t
    w[0] *= 0.5
    w[-1] *= 0.5
    return t, w


def _psi(v):
    # second antiderivative of the standard normal density, minus its asymptote
    return special.ndtr(-v) * -v + np.exp(-0.5 * v * v) / math.sqrt(2 * math.pi)


def box_box(t: np.ndarray, h: float, offsets: np.ndarray) -> np.ndarray:
    """Average of q_t(x - y) over x in [d, d+h), y in [0, h), d = offsets*h.

    Returns shape (len(t), len(offsets)).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d = np.asarray(offsets, dtype=float) * h
    out = np.empty((t.size, d.size))
    small = t < _REGIME_SWITCH
    if np.any(small):
        sig = np.sqrt(2 * t[small])[:, None, None]
        dd = (d[None, :] + _IMAGES[:, None])[None]
        hat = np.clip(h - np.abs(dd), 0.0, None)
        curv = sig * (_psi(np.abs(dd + h) / sig) - 2 * _psi(np.abs(dd) / sig)
                      + _psi(np.abs(dd - h) / sig))
        out[small] = np.sum(hat + curv, axis=1) / h**2
    if np.any(~small):
        tl = t[~small][:, None, None]
        n = _MODES[None, :, None].astype(float)
        terms = np.sinc(n * h) ** 2 * np.exp(-_FOUR_PI2 * n * n * tl) \
            * np.cos(2 * np.pi * n * d[None, None, :])
        out[~small] = 1.0 + 2 * np.sum(terms, axis=1)
    return out


def _interval_mass(lo, hi):
    # Phi(hi) - Phi(lo) without cancellation in the upper tail
    return np.where(lo > 0, special.ndtr(-lo) - special.ndtr(-hi),
                    special.ndtr(hi) - special.ndtr(lo))


def point_box(t: np.ndarray, x: float, left: np.ndarray, h: float) -> np.ndarray:
    """int_{left}^{left+h} q_t(x - y) dy for each interval; shape (len(t), len(left))."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    left = np.asarray(left, dtype=float)
    out = np.empty((t.size, left.size))
    small = t < _REGIME_SWITCH
    if np.any(small):
        sig = np.sqrt(2 * t[small])[:, None, None]
        a = (left[None, :] - x + _IMAGES[:, None])[None]
        out[small] = np.sum(_interval_mass(a / sig, (a + h) / sig), axis=1)
    if np.any(~small):
        tl = t[~small][:, None, None]
        n = _MODES[None, :, None].astype(float)
        phase = 2 * np.pi * n * (x - left[None, None, :] - h / 2)
        terms = np.exp(-_FOUR_PI2 * n * n * tl) * np.sinc(n * h) * np.cos(phase)
        out[~small] = h * (1.0 + 2 * np.sum(terms, axis=1))
    return out
