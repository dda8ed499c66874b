"""Biharmonic Gaussian field on T^4 and its approximations.

Three samplers share one probabilistic model, the centered Gaussian field h
with E[<h,u>^2] = sum_{n != 0} |u(n)|^2 / (2 pi^2 |n|^4):

* ``sample_spectral_field``: independent Fourier modes up to a cutoff.
* ``sample_haar_field``: the semi-discrete field
  h_l = sqrt(8) pi * sum_{k<l} sum_iota xi_{k,iota} G eta_{k,iota},
  i.e. sqrt(8) pi times the Green operator applied to white noise projected
  onto functions constant on level-l cubes.
* ``sample_cell_averages``: the exact law of the cube averages pi_l h,
  drawn on the discrete torus by diagonalizing its stationary covariance.

Cube-averaged kernels are computed from the heat-kernel representation with a
log-time trapezoid rule (no Fourier truncation); see ``_heat``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _heat
from .haar import GridField, block_average, haar_synthesis
from .rng import SeededStream
from .spectral_core import (
    EIGHT_PI2,
    FOUR_PI2,
    KernelTable,
    SpectralField,
    apply_biharmonic,
    as_points,
    biharmonic_form,
    biharmonic_kernel,
    cube_average_factors,
    fold_axis,
    frequency_axis,
    squared_norms,
)

SQRT8_PI = math.sqrt(8.0) * math.pi
_TIME_STEP = 0.1


def _outer4(v: np.ndarray) -> np.ndarray:
    return v[:, None, None, None] * v[None, :, None, None] * v[None, None, :, None] * v[None, None, None, :]


# ---------------------------------------------------------------------------
# spectral sampler


def mode_variances(cutoff: int) -> np.ndarray:
    """E|c(n)|^2 = 1 / (2 pi^2 |n|^4) on the coefficient box (0 at n = 0)."""
    return KernelTable("biharmonic", cutoff).weights


def _half_space(cutoff: int) -> slice:
    total = (2 * cutoff + 1) ** 4
    return slice((total - 1) // 2 + 1, total)


def sample_spectral_field(cutoff: int, stream) -> SpectralField:
    """Truncated biharmonic field: Hermitian Gaussian modes of variance 1/(2 pi^2 |n|^4)."""
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    var = mode_variances(cutoff).ravel()
    half = _half_space(cutoff)
    size = half.stop - half.start
    z = stream.normals("spectral", cutoff, size=(2, size))
    coeffs = np.zeros(var.size, dtype=complex)
    coeffs[half] = np.sqrt(var[half] / 2) * (z[0] + 1j * z[1])
    coeffs[: half.start - 1] = np.conj(coeffs[half][::-1])
    return SpectralField(cutoff, coeffs.reshape((2 * cutoff + 1,) * 4))


def spectral_pairings(cutoff: int, stream: SeededStream, tests: list[SpectralField],
                      count: int, first_replica: int = 0) -> np.ndarray:
    """<h_r, u_j> for replicas r of the spectral sampler, shape (count, len(tests)).

    Equal to ``sample_spectral_field(cutoff, stream.replica(r)).pairing(u_j)``
    without materializing the fields.
    """
    var = mode_variances(cutoff).ravel()
    half = _half_space(cutoff)
    scale = np.sqrt(var[half] / 2)
    cols = []
    for u in tests:
        if u.cutoff > cutoff:
            raise ValueError("test functions must fit inside the sampler cutoff")
        c = u.padded(cutoff).coefficients.ravel()[half]
        # 2 Re[(a + ib) s conj(c)] = 2 s (a Re c + b Im c)
        cols.append(np.concatenate([2 * scale * c.real, 2 * scale * c.imag]))
    T = np.stack(cols, axis=1)
    out = np.empty((count, len(tests)))
    for i in range(count):
        z = stream.replica(first_replica + i).normals("spectral", cutoff, size=(2, T.shape[0] // 2))
        out[i] = z.ravel() @ T
    return out


# ---------------------------------------------------------------------------
# exact cube-averaged kernels


def _time_grid(level: int, order: float):
    h = 2.0**-level
    t_min = (1e-17 * h**4) ** (1.0 / order)
    return _heat.log_time_nodes(t_min, 2.0, _TIME_STEP)


@functools.lru_cache(maxsize=32)
def folded_spectrum(level: int, order: float) -> np.ndarray:
    """A(m) = sum_{n = m mod 2^l, n != 0} |c_l(n)|^2 (4 pi^2 |n|^2)^(-order).

    ``c_l`` is the cube-average multiplier. The Fourier transform of A over
    the discrete torus is the double cube average of the order-s Green
    kernel. Shape (2^l,)*4, indexed by m in numpy FFT order.
    """
    P = 2**level
    t, w = _time_grid(level, order)
    a = _heat.box_box(t, 2.0**-level, np.arange(P))
    ahat = np.fft.fft(a, axis=1).real / P
    acc = np.zeros((P,) * 4)
    coef = w * t ** (order - 1) / special.gamma(order)
    for ti in range(t.size):
        acc += coef[ti] * _outer4(ahat[ti])
    # the n = 0 term (present only at m = 0) is removed: ahat(0) == 1 exactly
    acc[0, 0, 0, 0] = 0.0
    acc.setflags(write=False)
    return acc


@functools.lru_cache(maxsize=32)
def cube_covariance_spectrum(level: int) -> np.ndarray:
    """Eigenvalues S(m) of the covariance of the level-l cube averages of h."""
    return EIGHT_PI2 * folded_spectrum(level, 2.0)


@functools.lru_cache(maxsize=32)
def cube_covariance_table(level: int) -> np.ndarray:
    """k_l as a function of the cube offset delta (numpy FFT index order)."""
    out = np.fft.fftn(cube_covariance_spectrum(level)).real
    out.setflags(write=False)
    return out


def _double_cube_green(level: int, order: float, offset) -> float:
    t, w = _time_grid(level, order)
    offs = np.mod(np.asarray(offset, dtype=int), 2**level)
    a = _heat.box_box(t, 2.0**-level, offs)
    integrand = np.prod(a, axis=1) - 1.0
    return float(np.sum(w * t ** (order - 1) * integrand) / special.gamma(order))


@functools.lru_cache(maxsize=64)
def cube_variance(level: int) -> float:
    """k_l(x, x): variance of a level-l cube average of h (finite, x-independent)."""
    return EIGHT_PI2 * _double_cube_green(level, 2.0, (0, 0, 0, 0))


def cube_averaged_covariance(level: int, x, y, cutoff: int | None = None) -> float:
    """k_l(x, y) = 8 pi^2 2^(8l) int_{Q_l(x)} int_{Q_l(y)} k.

    ``cutoff=None`` gives the exact value; an integer gives the covariance of
    the cube averages of the spectral sampler truncated at that cutoff.
    """
    P = 2**level
    ax = np.floor(as_points(x) * P).astype(int)
    ay = np.floor(as_points(y) * P).astype(int)
    delta = np.mod(ax - ay, P)
    if cutoff is None:
        return EIGHT_PI2 * _double_cube_green(level, 2.0, delta)
    f = np.abs(cube_average_factors(cutoff, level)) ** 2
    n = frequency_axis(cutoff)
    # cos of a sum is the real part of a product of exponentials
    e = [f * np.exp(2j * np.pi * n * d / P) for d in delta]
    w = mode_variances(cutoff)
    return float(np.einsum("abcd,a,b,c,d->", w, *e).real)


# ---------------------------------------------------------------------------
# exact sampler of cube averages


@dataclass
class CellAverageSampler:
    """Draws pi_l h exactly, optionally with a finite set of explicit Fourier modes.

    Explicit modes are sampled individually (so linear functionals of them,
    such as <h, e^{4 phi}>, are available jointly with the cube averages);
    the remaining modes enter through the folded covariance spectrum.
    """

    level: int
    explicit: SpectralField | None = None
    _sqrt_eig: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        S = np.array(cube_covariance_spectrum(self.level))
        if self.explicit is not None:
            S = S - self._explicit_spectrum()
            if np.min(S) < -1e-10 * np.max(S):
                raise ValueError("explicit modes exceed the folded spectrum")
            S = np.clip(S, 0.0, None)
        self._sqrt_eig = np.sqrt(S * 2 ** (4 * self.level))

    def _support(self) -> np.ndarray:
        c = np.abs(self.explicit.coefficients)
        mask = c > 1e-14 * c.max()
        mask[(self.explicit.cutoff,) * 4] = False
        return mask

    def _explicit_spectrum(self) -> np.ndarray:
        N = self.explicit.cutoff
        P = 2**self.level
        f = np.abs(cube_average_factors(N, self.level)) ** 2
        weights = mode_variances(N) * _outer4(f) * self._support()
        for ax in range(4):
            weights = fold_axis(weights, ax, P, N)
        return weights

    def sample(self, stream) -> tuple[GridField, SpectralField | None]:
        P = 2**self.level
        xi = stream.normals("cells", self.level, size=(P,) * 4)
        vals = np.fft.ifftn(self._sqrt_eig * np.fft.fftn(xi)).real
        modes = None
        if self.explicit is not None:
            N = self.explicit.cutoff
            var = (mode_variances(N) * self._support()).ravel()
            half = _half_space(N)
            z = stream.normals("explicit", N, size=(2, half.stop - half.start))
            coeffs = np.zeros(var.size, dtype=complex)
            coeffs[half] = np.sqrt(var[half] / 2) * (z[0] + 1j * z[1])
            coeffs[: half.start - 1] = np.conj(coeffs[half][::-1])
            modes = SpectralField(N, coeffs.reshape((2 * N + 1,) * 4))
            vals = vals + modes.cube_averages(self.level)
        return GridField(self.level, vals), modes


def sample_cell_averages(level: int, stream) -> GridField:
    """Cube averages pi_l h of the biharmonic field, exact in law."""
    return CellAverageSampler(level).sample(stream)[0]


# ---------------------------------------------------------------------------
# semi-discrete Haar field


def green_cube_integrals(x, level: int, chunk: int = 64) -> np.ndarray:
    """B_alpha(x) = int_{Q_{l,alpha}} G(x, y) dy for every cube of the level.

    ``x`` of shape (..., 4) gives an array of shape (...,) + (2^l,)*4.
    """
    pts = as_points(x)
    flat = pts.reshape(-1, 4)
    P = 2**level
    h = 1.0 / P
    t, w = _heat.log_time_nodes(1e-16, 2.0, _TIME_STEP)
    left = np.arange(P) * h
    out = np.empty((flat.shape[0],) + (P,) * 4)
    base = h**4
    for start in range(0, flat.shape[0], chunk):
        block = flat[start:start + chunk]
        # I[k] has shape (T, points, P)
        I = [np.stack([_heat.point_box(t, p[k], left, h) for p in block], axis=1) for k in range(4)]
        acc = np.zeros((block.shape[0],) + (P,) * 4)
        for ti in range(t.size):
            a, b, c, d = (I[k][ti] for k in range(4))
            acc += w[ti] * (a[:, :, None, None, None] * b[:, None, :, None, None]
                            * c[:, None, None, :, None] * d[:, None, None, None, :] - base)
        out[start:start + block.shape[0]] = acc
    return out.reshape(pts.shape[:-1] + (P,) * 4)


def covariance_hat(level: int, x, y) -> float:
    """k^_l(x, y) = 8 pi^2 int G_l(x, z) G_l(y, z) dz with G_l(x, .) = pi_l G(x, .)."""
    bx = green_cube_integrals(x, level)
    by = bx if np.array_equal(as_points(x), as_points(y)) else green_cube_integrals(y, level)
    return float(EIGHT_PI2 * 2 ** (4 * level) * np.sum(bx * by))


@dataclass
class HaarFieldSample:
    """Coefficients xi_{k,iota}, k < level, of the semi-discrete field."""

    level: int
    coefficients: list[np.ndarray]
    seed: int | None = None

    def __post_init__(self):
        if len(self.coefficients) != self.level:
            raise ValueError("need one coefficient table per level below l")

    @property
    def count(self) -> int:
        return sum(c.size for c in self.coefficients)

    def noise(self) -> GridField:
        """Projected white noise w_l = sum xi eta as level-l cell values."""
        return GridField(self.level, haar_synthesis(self.coefficients), grounded=True)

    def evaluate(self, x) -> np.ndarray | float:
        """Exact pointwise values sqrt(8) pi (G w_l)(x)."""
        pts = as_points(x)
        B = green_cube_integrals(pts, self.level)
        W = self.noise().values
        out = SQRT8_PI * np.tensordot(B, W, axes=4)
        return float(out) if pts.ndim == 1 else out

    def spectrum(self, cutoff: int) -> SpectralField:
        """Fourier coefficients of the field for |n|_inf <= cutoff."""
        P = 2**self.level
        What = np.fft.fftn(self.noise().values) / P**4
        idx = np.mod(frequency_axis(cutoff), P)
        c = np.conj(cube_average_factors(cutoff, self.level))
        wn = What[np.ix_(idx, idx, idx, idx)] * _outer4(c)
        lam = FOUR_PI2 * squared_norms(cutoff)
        with np.errstate(divide="ignore", invalid="ignore"):
            hn = np.where(lam > 0, SQRT8_PI * wn / lam, 0.0)
        return SpectralField(cutoff, hn)

    def cell_averages(self) -> GridField:
        """Exact averages of the field over its own level-l cubes.

        The double cube average of G is diagonalized by the folded order-one
        spectrum, so no Fourier truncation enters.
        """
        D = folded_spectrum(self.level, 1.0)
        vals = SQRT8_PI * np.fft.ifftn(D * np.fft.fftn(self.noise().values)).real
        return GridField(self.level, vals, grounded=True)

    def cube_averages(self, level: int, cutoff: int = 32) -> np.ndarray:
        """Averages over level-``level`` cubes; exact for levels up to l, truncated above."""
        if level <= self.level:
            return block_average(self.cell_averages().values, self.level - level)
        return self.spectrum(cutoff).cube_averages(level)

    def extended(self, stream, level: int) -> "HaarFieldSample":
        """Same randomness continued to a finer level."""
        return sample_haar_field(level, stream, seed=self.seed)


def sample_haar_field(level: int, stream, seed: int | None = None) -> HaarFieldSample:
    if level < 1:
        raise ValueError("level must be at least 1")
    coeffs = [stream.normals("haar", k, size=(2**k,) * 4 + (15,)) for k in range(level)]
    return HaarFieldSample(level, coeffs, seed=getattr(stream, "seed", seed))


@functools.lru_cache(maxsize=16)
def haar_projected_covariance_table(level: int) -> np.ndarray:
    """Covariance of the level-l cube averages of the semi-discrete field h^_l.

    Equals 8 pi^2 sum_m D(m)^2 e_m with D the folded spectrum of the Green
    kernel; it differs from k_l because h^_l only sees projected noise.
    """
    D = folded_spectrum(level, 1.0)
    return np.fft.fftn(EIGHT_PI2 * D**2).real


def project_field(h, level: int, cutoff: int = 32) -> GridField:
    """Cube averages at ``level`` of a spectral field, Haar sample, or finer grid field."""
    if isinstance(h, SpectralField):
        return GridField(level, h.cube_averages(level))
    if isinstance(h, HaarFieldSample):
        return GridField(level, h.cube_averages(level, cutoff))
    if isinstance(h, GridField):
        if h.level < level:
            raise ValueError("grid field is coarser than the requested level")
        return GridField(level, block_average(h.values, h.level - level), h.grounded)
    raise TypeError(f"cannot project {type(h).__name__}")


def negative_sobolev_weights(level: int, eps: float) -> np.ndarray:
    """Per-DFT-mode weights with ||G^eps h^_l||^2 = 8 pi^2 sum_m A(m) |W^(m)|^2."""
    return EIGHT_PI2 * folded_spectrum(level, 2.0 + 2.0 * eps)


def negative_sobolev_norm2(sample: HaarFieldSample, eps: float) -> float:
    """||G^eps h^_l||_{L^2}^2 of one semi-discrete sample (no truncation)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    P = 2**sample.level
    What = np.fft.fftn(sample.noise().values) / P**4
    return float(np.sum(negative_sobolev_weights(sample.level, eps) * np.abs(What) ** 2))


def negative_sobolev_estimate(level: int, eps: float, stream: SeededStream, samples: int):
    """Monte Carlo mean and standard error of ||G^eps h^_l||^2 over replicas.

    Its limit as l grows is 8 pi^2 G^(2+2 eps)(0, 0).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    vals = np.array([negative_sobolev_norm2(sample_haar_field(level, stream.replica(r)), eps)
                     for r in range(samples)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)), vals


def expected_negative_sobolev(level: int, eps: float) -> float:
    return float(np.sum(negative_sobolev_weights(level, eps)))


# ---------------------------------------------------------------------------
# conformal change of metric g' = e^{2 phi} g


@dataclass
class ConformalWeight:
    """Conformal factor phi with the derived volume density f = e^{4 phi}.

    f is resolved on a grid of ``resolution``^4 points; ``resolution_error``
    compares v' and k(f, f) against a doubled grid.
    """

    phi: SpectralField
    resolution: int = 16
    density: SpectralField = field(init=False)
    volume: float = field(init=False)
    density_form: float = field(init=False)
    potential: SpectralField = field(init=False)
    resolution_error: float = field(init=False)

    def __post_init__(self):
        self.density = self._density(self.resolution)
        self.volume = self.density.mean
        if self.volume <= 0:
            raise ValueError("conformal volume must be positive")
        self.density_form = biharmonic_form(self.density)
        self.potential = apply_biharmonic(self.density)
        fine = self._density(2 * self.resolution)
        self.resolution_error = max(abs(fine.mean - self.volume),
                                    abs(biharmonic_form(fine) - self.density_form))

    def _density(self, M: int) -> SpectralField:
        vals = np.exp(4 * self.phi.grid_values(M))
        spec = np.fft.fftn(vals) / M**4
        N = (M - 1) // 2
        idx = np.mod(frequency_axis(N), M)
        return SpectralField(N, spec[np.ix_(idx, idx, idx, idx)])

    def weighted(self, u) -> SpectralField:
        """u e^{4 phi} as a spectral field (u a spectral field or a callable)."""
        M = self.resolution
        g = np.arange(M) / M
        if isinstance(u, SpectralField):
            uv = u.grid_values(M)
        else:
            X = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1)
            uv = np.asarray(u(X), dtype=float)
        vals = uv * np.exp(4 * self.phi.grid_values(M))
        spec = np.fft.fftn(vals) / M**4
        N = (M - 1) // 2
        idx = np.mod(frequency_axis(N), M)
        return SpectralField(N, spec[np.ix_(idx, idx, idx, idx)])

    def phibar(self, x) -> np.ndarray | float:
        """(2/v') int k(x, z) dvol'(z) - (1/v'^2) iint k dvol' dvol'."""
        return 2.0 / self.volume * self.potential.evaluate(x) - self.density_form / self.volume**2

    def phibar_cube_averages(self, level: int) -> np.ndarray:
        return 2.0 / self.volume * self.potential.cube_averages(level) - self.density_form / self.volume**2

    def phi_at(self, x):
        return self.phi.evaluate(x)


def conformal_shift_kernel(w: ConformalWeight, x, y) -> float:
    """k_{g'}(x, y) = k(x, y) - phibar(x)/2 - phibar(y)/2."""
    return biharmonic_kernel(x, y) - 0.5 * w.phibar(x) - 0.5 * w.phibar(y)


def conformal_kernel_form(w: ConformalWeight, u, v) -> float:
    """iint k_{g'}(x, y) u(x) v(y) dvol'(x) dvol'(y) for test functions u, v."""
    U, V = w.weighted(u), w.weighted(v)
    iu, iv = U.mean, V.mean
    pu = 2.0 / w.volume * biharmonic_form(w.density, U) - w.density_form / w.volume**2 * iu
    pv = 2.0 / w.volume * biharmonic_form(w.density, V) - w.density_form / w.volume**2 * iv
    return biharmonic_form(U, V) - 0.5 * pu * iv - 0.5 * iu * pv


def shift_constant(h: SpectralField, w: ConformalWeight) -> float:
    """xi = (1/v') <h, e^{4 phi}>."""
    return h.pairing(w.density) / w.volume


def conformal_shift_field(h: SpectralField, w: ConformalWeight) -> SpectralField:
    """h' = h - (1/v') <h, e^{4 phi}>, a field grounded for vol_{g'}."""
    out = SpectralField(h.cutoff, h.coefficients.copy())
    out.coefficients[(h.cutoff,) * 4] -= shift_constant(h, w)
    return out
