"""Liouville quantum gravity measures on T^4 from approximating fields.

mu_l = exp(gamma h_l - gamma^2 / 2 k_l) dvol, where h_l is an approximation of
the biharmonic field with pointwise variance k_l. Three approximations are
supported: exact cube averages of h (``semi_discrete_measure``), the discrete
field on T_l (``discrete_measure``) and a Fourier-truncated field.

Analytic statements hold for gamma < sqrt(8) (L^1 convergence) and
gamma < 2 (L^2 bounds); outside these ranges results are flagged.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import discrete as _discrete
from .fields import (
    CellAverageSampler,
    ConformalWeight,
    cube_covariance_table,
    cube_variance,
    mode_variances,
)
from .haar import GridField, block_average
from .spectral_core import SpectralField

L1_THRESHOLD = math.sqrt(8.0)
L2_THRESHOLD = 2.0


def regime(gamma: float) -> str:
    """'L2' for |gamma| < 2, 'L1' for |gamma| < sqrt 8, 'unsupported' otherwise."""
    g = abs(gamma)
    if g < L2_THRESHOLD:
        return "L2"
    if g < L1_THRESHOLD:
        return "L1"
    return "unsupported"


@dataclass
class LiouvilleMeasure:
    """Density of mu_l per level-l cube (or site): mass_Q = mu_l(Q)."""

    level: int
    gamma: float
    masses: np.ndarray
    representative: str = "anchor"

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.shape != (2**self.level,) * 4:
            raise ValueError("masses must have one entry per level-l cube")

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def integrate(self, u) -> float:
        """int u dmu_l; u is a callable, a GridField or an array of cube values."""
        if isinstance(u, GridField):
            vals = u.values if u.level == self.level else _discrete.restrict(u, self.level, self.representative).values
        elif callable(u):
            vals = _discrete.restrict(u, self.level, self.representative).values
        else:
            vals = np.asarray(u, dtype=float)
        return float(np.sum(self.masses * vals))

    def coarsened(self, level: int) -> "LiouvilleMeasure":
        """Masses of the coarser cubes (sums, not averages)."""
        if level > self.level:
            raise ValueError("can only coarsen")
        m = block_average(self.masses, self.level - level) * 2 ** (4 * (self.level - level))
        return LiouvilleMeasure(level, self.gamma, m, self.representative)


@dataclass
class MomentReport:
    """Monte Carlo moment estimate serialized as one JSON line."""

    quantity: str
    level: int
    gamma: float
    estimate: float
    stderr: float
    samples: int
    reference: float | None = None
    regime: str = field(init=False)

    def __post_init__(self):
        self.regime = regime(self.gamma)

    @property
    def zscore(self) -> float | None:
        if self.reference is None or self.stderr == 0:
            return None
        return (self.estimate - self.reference) / self.stderr

    def to_json(self) -> str:
        d = asdict(self)
        d["zscore"] = self.zscore
        return json.dumps(d, sort_keys=True)


def _check_gamma(gamma: float, strict: bool):
    if strict and regime(gamma) == "unsupported":
        raise ValueError(f"gamma={gamma} is outside the range |gamma| < sqrt(8)")


def _cell_masses(level: int, gamma: float, cells: np.ndarray, variance) -> np.ndarray:
    return 2.0 ** (-4 * level) * np.exp(gamma * cells - 0.5 * gamma**2 * variance)


def semi_discrete_measure(level: int, gamma: float, source, strict: bool = True) -> LiouvilleMeasure:
    """mu_l with h replaced by its level-l cube averages pi_l h.

    ``source`` is a GridField of cube averages at level >= l (coarsened by
    block averaging, which is the exact tower property) or a SpectralField
    (truncated field, normalized by its own cube-average variance).
    """
    _check_gamma(gamma, strict)
    if isinstance(source, GridField):
        if source.level < level:
            raise ValueError("source field is coarser than the requested level")
        cells = block_average(source.values, source.level - level)
        var = cube_variance(level)
    elif isinstance(source, SpectralField):
        cells = source.cube_averages(level)
        var = truncated_cube_variance(source.cutoff, level)
    else:
        raise TypeError("source must be a GridField or SpectralField")
    return LiouvilleMeasure(level, gamma, _cell_masses(level, gamma, cells, var))


def truncated_cube_variance(cutoff: int, level: int) -> float:
    from .spectral_core import cube_average_factors
    f = np.abs(cube_average_factors(cutoff, level)) ** 2
    w = mode_variances(cutoff)
    return float(np.einsum("abcd,a,b,c,d->", w, f, f, f, f))


def discrete_measure(level: int, gamma: float, field_: GridField, strict: bool = True) -> LiouvilleMeasure:
    """mu_l on T_l from the discrete field, normalized by its site variance."""
    _check_gamma(gamma, strict)
    if field_.level != level:
        raise ValueError("field level does not match")
    var = _discrete.diagonal_variance(level)
    return LiouvilleMeasure(level, gamma, _cell_masses(level, gamma, field_.values, var))


def sample_semi_discrete(level: int, gamma: float, stream, strict: bool = True) -> LiouvilleMeasure:
    return semi_discrete_measure(level, gamma, CellAverageSampler(level).sample(stream)[0], strict)


# ---------------------------------------------------------------------------
# moments


def second_moment_quadrature(level: int, gamma: float, u=None, representative: str = "anchor") -> float:
    """E[(int u dmu_l)^2] = 2^(-8l) sum_{a,b} u_a u_b exp(gamma^2 k_l(a - b))."""
    E = np.exp(gamma**2 * cube_covariance_table(level))
    if u is None:
        return float(np.sum(E) * 2.0 ** (-4 * level))
    U = u.values if isinstance(u, GridField) else _discrete.restrict(u, level, representative).values
    conv = np.fft.ifftn(np.fft.fftn(E) * np.fft.fftn(U)).real
    return float(np.sum(U * conv) * 2.0 ** (-8 * level))


def second_moment_bound(gamma: float, grid: int = 64) -> float:
    """Level-independent bound e^{gamma^2 C} int_{T^4} d(0, z)^(-gamma^2) dz for gamma < 2.

    C bounds k_l(x, y) + log d(x, y) uniformly; the integral is split into the
    unit ball (closed form) and the rest of the cube (midpoint rule).
    """
    if not 0 <= gamma < 2:
        raise ValueError("the bound needs 0 <= gamma < 2")
    a = gamma**2
    ball = 2 * math.pi**2 * (0.5) ** (4 - a) / (4 - a)
    g = (np.arange(grid) + 0.5) / grid - 0.5
    X = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1)
    r = np.sqrt(np.sum(X**2, axis=-1))
    outside = np.sum(np.where(r > 0.5, r ** (-a), 0.0)) / grid**4
    return math.exp(a * log_correction_bound()) * (ball + outside)


def log_correction_bound(levels: int = 5) -> float:
    """sup over levels and offsets of k_l(d) + log d(Q, Q'), with d the cube-center distance

    floored at half a cube side; a numerical constant used by ``second_moment_bound``.
    """
    best = -np.inf
    for lvl in range(1, levels + 1):
        P = 2**lvl
        tab = cube_covariance_table(lvl)
        j = np.minimum(np.arange(P), P - np.arange(P)) / P
        d = np.sqrt(j[:, None, None, None] ** 2 + j[None, :, None, None] ** 2
                    + j[None, None, :, None] ** 2 + j[None, None, None, :] ** 2)
        d = np.maximum(d, 0.5 / P)
        best = max(best, float(np.max(tab + np.log(d))))
    return best


def moment_estimate(level: int, gamma: float, stream, samples: int, power: float = 1.0,
                    u=None, reference: float | None = None) -> MomentReport:
    """Monte Carlo estimate of E[(int u dmu_l)^power] over independent replicas."""
    sampler = CellAverageSampler(level)
    vals = np.empty(samples)
    for r in range(samples):
        cells = sampler.sample(stream.replica(r))[0]
        mu = semi_discrete_measure(level, gamma, cells, strict=False)
        vals[r] = mu.total_mass if u is None else mu.integrate(u)
    x = vals**power
    return MomentReport(f"E[mu^{power:g}]", level, gamma, float(x.mean()),
                        float(x.std(ddof=1) / math.sqrt(samples)), samples, reference)


def negative_moment_estimate(level: int, gamma: float, stream, samples: int, p: float = 1.0) -> MomentReport:
    """E[mu_l(T^4)^(-p)]; finite for every p under the theory's hypotheses."""
    if p <= 0:
        raise ValueError("p must be positive")
    return moment_estimate(level, gamma, stream, samples, power=-p)


# ---------------------------------------------------------------------------
# conformal quasi-invariance


def conformal_mass_factor(weight: ConformalWeight, gamma: float, xi: float, level: int,
                          representative: str = "anchor") -> np.ndarray:
    """exp(-gamma xi + gamma^2/2 phibar + 4 phi) at the representative point of each cube."""
    P = 2**level
    off = 0.5 if representative == "midpoint" else 0.0
    g = (np.arange(P) + off) / P
    X = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1)
    return np.exp(-gamma * xi + 0.5 * gamma**2 * weight.phibar(X) + 4 * weight.phi_at(X))


@dataclass
class ConformalPair:
    """Both sides of the quasi-invariance identity for one field draw."""

    factor_side: float
    direct_side: float


class ConformalSampler:
    """Joint draws of pi_l h and the shift xi = <h, e^{4 phi}> / v'.

    The modes carrying e^{4 phi} are drawn explicitly so that xi is exact;
    the complementary modes enter through the folded cube-average spectrum.
    """

    def __init__(self, level: int, weight: ConformalWeight, gamma: float,
                 representative: str = "midpoint"):
        self.level = level
        self.weight = weight
        self.gamma = gamma
        self.representative = representative
        support = SpectralField(weight.density.cutoff, weight.density.coefficients.copy())
        self._sampler = CellAverageSampler(level, explicit=support)
        self._factor_base = conformal_mass_factor(weight, gamma, 0.0, level, representative)
        P = 2**level
        off = 0.5 if representative == "midpoint" else 0.0
        g = (np.arange(P) + off) / P
        X = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1)
        self._density_at = np.exp(4 * weight.phi_at(X))
        self._var = cube_variance(level)
        self._var_shift = self._var - weight.phibar_cube_averages(level)

    def draw(self, stream, u_values: np.ndarray) -> ConformalPair:
        cells, modes = self._sampler.sample(stream)
        xi = modes.pairing(self.weight.density) / self.weight.volume
        mu = _cell_masses(self.level, self.gamma, cells.values, self._var)
        factor = self._factor_base * math.exp(-self.gamma * xi)
        lhs = float(np.sum(u_values * mu * factor))
        shifted = cells.values - xi
        mu_prime = 2.0 ** (-4 * self.level) * self._density_at * np.exp(
            self.gamma * shifted - 0.5 * self.gamma**2 * self._var_shift)
        return ConformalPair(lhs, float(np.sum(u_values * mu_prime)))


def multifractal_moments(level: int, gamma: float, stream, samples: int,
                         qs=(2.0, 3.0)) -> dict:
    """Sample moments E[mu_k(Q)^q] for cubes of levels k <= level (diagnostic only).

    Masses at coarser levels come from the same draws by summation. Returns
    {q: [(k, moment), ...]}.
    """
    sampler = CellAverageSampler(level)
    acc = {q: np.zeros(level + 1) for q in qs}
    for r in range(samples):
        mu = semi_discrete_measure(level, gamma, sampler.sample(stream.replica(r))[0], strict=False)
        for k in range(level + 1):
            m = mu.coarsened(k).masses
            for q in qs:
                acc[q][k] += np.mean(m**q)
    return {q: [(k, float(v / samples)) for k, v in enumerate(acc[q])] for q in qs}
