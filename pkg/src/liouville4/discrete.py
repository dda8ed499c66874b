"""Discrete torus T_l = (2^-l Z / Z)^4 with the normalized counting measure.

Inner products are <u, v> = 2^(-4l) sum_i u(i) v(i). The discrete Laplacian
is Delta_l = 2^(2l+3) (p - I) with p the nearest-neighbour walk, and its
inverse on grounded functions is G_l. The discrete biharmonic field is
h_l = sqrt(8) pi G_l xi_l with xi_l white noise for the normalized measure.
"""
from __future__ import annotations

import functools
import math
from typing import NamedTuple

import numpy as np

from .haar import GridField, haar_synthesis
from .spectral_core import EIGHT_PI2

SQRT8_PI = math.sqrt(8.0) * math.pi
DiscreteField = GridField  # a function on T_l is stored like a level-l grid field
_NEUMANN_MAX_LEVEL = 4


def _check_level(level: int) -> int:
    if not isinstance(level, (int, np.integer)) or level < 1:
        raise ValueError("level must be a positive integer")
    return int(level)


@functools.lru_cache(maxsize=16)
def eigenvalues(level: int) -> np.ndarray:
    """lambda(m) = 2^(2l+3) (1 - sum_k cos(2 pi m_k / 2^l) / 4) in FFT index order."""
    level = _check_level(level)
    P = 2**level
    c = np.cos(2 * np.pi * np.arange(P) / P)
    s = c[:, None, None, None] + c[None, :, None, None] + c[None, None, :, None] + c[None, None, None, :]
    lam = 2.0 ** (2 * level + 3) * (1 - s / 4)
    lam.setflags(write=False)
    return lam


def spectral_gap(level: int) -> float:
    """Smallest nonzero eigenvalue of -Delta_l; increases to 4 pi^2."""
    level = _check_level(level)
    return 2.0 ** (2 * level + 1) * (1 - math.cos(2 * math.pi / 2**level))


def discrete_laplacian(u) -> np.ndarray:
    """Delta_l u for a GridField or a (2^l,)*4 array."""
    vals = u.values if isinstance(u, GridField) else np.asarray(u, dtype=float)
    level = int(round(math.log2(vals.shape[0])))
    out = -8.0 * vals
    for ax in range(4):
        out = out + np.roll(vals, 1, axis=ax) + np.roll(vals, -1, axis=ax)
    return 2.0 ** (2 * level) * out


def _walk(vals: np.ndarray) -> np.ndarray:
    # lazy walk q = (I + p) / 2
    acc = 4.0 * vals
    for ax in range(4):
        acc = acc + 0.5 * (np.roll(vals, 1, axis=ax) + np.roll(vals, -1, axis=ax))
    return acc / 8.0


class NeumannResult(NamedTuple):
    field: GridField
    terms: int
    tail_bound: float


def neumann_series(u: GridField, rtol: float = 1e-14) -> NeumannResult:
    """G_l u = 2^(-2l-4) sum_k q^k u with the lazy walk q = (I + p)/2.

    The plain walk p has the eigenvalue -1 on the bipartite torus, so its
    series does not converge; q shares the inverse up to the factor 1/2 and
    has spectrum in [0, r] on grounded functions, r = 1 - lambda_1 2^(-2l-4).
    Terms stop once the geometric tail r^K / (1 - r) drops below ``rtol``;
    ``tail_bound`` is the resulting bound on the L^2 error.
    """
    level = u.level
    if level > _NEUMANN_MAX_LEVEL:
        raise ValueError("the walk series is limited to levels <= 4")
    r = 1.0 - spectral_gap(level) * 2.0 ** (-2 * level - 4)
    term = u.values - u.values.mean()
    acc = np.zeros_like(term)
    scale = max(float(np.sqrt(np.mean(term**2))), 1e-300)
    k = 0
    while True:
        acc += term
        k += 1
        term = _walk(term)
        if r**k / (1 - r) < rtol:
            break
    pref = 2.0 ** (-2 * level - 4)
    vals = pref * acc
    return NeumannResult(GridField(level, vals - vals.mean(), grounded=True), k,
                         pref * scale * r**k / (1 - r))


@functools.lru_cache(maxsize=4)
def _dense_green(level: int) -> np.ndarray:
    P = 2**level
    n = P**4
    basis = np.eye(n).reshape((n,) + (P,) * 4)
    lap = np.stack([discrete_laplacian(b).ravel() for b in basis])
    return np.linalg.pinv(-lap, hermitian=True)


def discrete_green_apply(u, method: str = "dft", tol: float = 1e-14) -> GridField:
    """G_l u for a GridField u (the mean of u is discarded).

    ``method`` is ``"dft"`` (exact diagonalization), ``"neumann"`` (lazy
    random-walk series, levels <= 4) or ``"dense"`` (pseudo-inverse, levels <= 2).
    """
    if not isinstance(u, GridField):
        raise TypeError("u must be a GridField")
    level = u.level
    if method == "dft":
        lam = eigenvalues(level)
        spec = np.fft.fftn(u.values)
        with np.errstate(divide="ignore", invalid="ignore"):
            spec = np.where(lam > 0, spec / lam, 0.0)
        vals = np.fft.ifftn(spec).real
    elif method == "neumann":
        return neumann_series(u, tol).field
    elif method == "dense":
        if level > 2:
            raise ValueError("dense inversion is limited to levels <= 2")
        vals = (_dense_green(level) @ u.values.ravel()).reshape(u.values.shape)
    else:
        raise ValueError(f"unknown method {method!r}")
    vals = vals - vals.mean()
    return GridField(level, vals, grounded=True)


def white_noise(level: int, stream) -> GridField:
    """Discrete white noise for the normalized measure, grounded: 2^(2l) (xi - mean xi)."""
    level = _check_level(level)
    xi = stream.normals("sites", level, size=(2**level,) * 4)
    return GridField(level, 2.0 ** (2 * level) * (xi - xi.mean()), grounded=True)


def sample_discrete_field(level: int, stream, method: str = "site") -> GridField:
    """h_l = sqrt(8) pi G_l xi_l.

    ``method="site"`` draws i.i.d. site noise; ``method="haar"`` builds the
    noise from Haar coefficients of levels < l. Both give the same law.
    """
    level = _check_level(level)
    if method == "site":
        noise = white_noise(level, stream)
    elif method == "haar":
        coeffs = [stream.normals("haar", k, size=(2**k,) * 4 + (15,)) for k in range(level)]
        noise = GridField(level, haar_synthesis(coeffs), grounded=True)
    else:
        raise ValueError(f"unknown method {method!r}")
    g = discrete_green_apply(noise)
    return GridField(level, SQRT8_PI * g.values, grounded=True)


def diagonal_variance(level: int) -> float:
    """k_l(i, i) = 8 pi^2 sum_{m != 0} lambda(m)^-2."""
    lam = eigenvalues(level).ravel()[1:]
    return float(EIGHT_PI2 * np.sum(lam**-2.0))


def diagonal_variance_green(level: int) -> float:
    """Same quantity as 8 pi^2 2^(4l) sum_j G(0, j)^2 with G the matrix inverse."""
    P = 2**level
    delta = np.zeros((P,) * 4)
    delta[0, 0, 0, 0] = 1.0
    col = discrete_green_apply(GridField(level, delta)).values
    return float(EIGHT_PI2 * P**4 * np.sum(col**2))


def diagonal_variance_walk(level: int, terms: int):
    """Return-probability series (pi^2/32) sum_k (k+1)(q^k(0,0) - 2^-4l).

    Returns (value, tail bound) after ``terms`` terms.
    """
    level = _check_level(level)
    P = 2**level
    n = P**4
    vals = np.zeros((P,) * 4)
    vals[0, 0, 0, 0] = 1.0
    total = 0.0
    for k in range(terms):
        total += (k + 1) * (vals[0, 0, 0, 0] - 1.0 / n)
        vals = _walk(vals)
    r = 1.0 - spectral_gap(level) * 2.0 ** (-2 * level - 4)
    K = terms - 1
    tail = r ** (K + 1) * ((K + 2) - (K + 1) * r) / (1 - r) ** 2
    c = math.pi**2 / 32
    return c * total, c * tail


def extend_piecewise(u: GridField) -> GridField:
    """The discrete function seen as constant on each cube Q_l(i) (anchor convention)."""
    return GridField(u.level, u.values.copy(), u.grounded)


def restrict(u, level: int, representative: str = "anchor") -> GridField:
    """Values of a callable or finer GridField at the representative point of each cube."""
    level = _check_level(level)
    P = 2**level
    offset = {"anchor": 0.0, "midpoint": 0.5}.get(representative)
    if offset is None:
        raise ValueError("representative must be 'anchor' or 'midpoint'")
    g = (np.arange(P) + offset) / P
    X = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1)
    if isinstance(u, GridField):
        return GridField(level, u.evaluate(X))
    return GridField(level, np.asarray(u(X), dtype=float))


def gibbs_log_density(zeta: GridField) -> float:
    """-(1/16 pi^2) 2^(-4l) sum_i |Delta_l zeta(i)|^2, up to normalization."""
    lap = discrete_laplacian(zeta)
    return float(-np.mean(lap**2) / (16 * math.pi**2))
