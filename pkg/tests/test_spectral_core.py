import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liouville4.spectral_core import (
    EIGHT_PI2,
    FOUR_PI2,
    KernelTable,
    SpectralField,
    TorusPoint,
    apply_biharmonic,
    apply_green,
    biharmonic_form,
    biharmonic_kernel,
    biharmonic_value,
    fractional_green_kernel,
    fractional_green_value,
    green_kernel,
    grounded_heat_kernel,
    paneitz_energy,
    sobolev_norm,
    torus_distance,
    upper_gamma,
)

coord = st.floats(0, 1, exclude_max=True, allow_nan=False)
point = st.tuples(coord, coord, coord, coord).map(np.array)


def _lattice_sum(weight, cutoff):
    n = np.arange(-cutoff, cutoff + 1)
    n2 = (n[:, None, None, None] ** 2 + n[None, :, None, None] ** 2
          + n[None, None, :, None] ** 2 + n[None, None, None, :] ** 2).astype(float)
    n2 = n2[n2 > 0]
    return float(np.sum(weight(n2)))


def _midpoint_grid(M=16):
    g = (np.arange(M) + 0.5) / M
    return np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1).reshape(-1, 4)


# --- points -----------------------------------------------------------------

@pytest.mark.parametrize("x, y, d", [
    ((0, 0, 0, 0), (0.5, 0, 0, 0), 0.5),
    ((0.9, 0, 0, 0), (0.1, 0, 0, 0), 0.2),
    ((0.75, 0.75, 0.75, 0.75), (0, 0, 0, 0), 0.5),
])
def test_torus_distance_examples(x, y, d):
    assert torus_distance(TorusPoint(*x), TorusPoint(*y)) == pytest.approx(d, abs=1e-15)


@given(point, point)
def test_torus_distance_is_a_symmetric_bounded_metric(x, y):
    d = torus_distance(x, y)
    assert d == pytest.approx(torus_distance(y, x), abs=1e-15)
    assert 0 <= d <= 1.0 + 1e-12
    assert torus_distance(x, x + np.array([1, -2, 3, 0])) < 1e-9


def test_torus_point_wraps_coordinates():
    p = TorusPoint(1.25, -0.25, 0, 3.5)
    assert p.coords == (0.25, 0.75, 0.0, 0.5)
    with pytest.raises(ValueError):
        TorusPoint(0.1, 0.2)


# --- heat kernel ------------------------------------------------------------

def test_heat_kernel_diagonal_matches_lattice_sum():
    ref = _lattice_sum(lambda n2: np.exp(-FOUR_PI2 * n2 * 0.1), 6)
    assert ref == pytest.approx(0.1637, abs=1e-3)
    assert grounded_heat_kernel(0.1, np.zeros(4), np.zeros(4)) == pytest.approx(ref, rel=1e-10)


def test_heat_kernel_decays_exponentially():
    x = np.array([0.1, 0.2, 0.3, 0.4])
    assert abs(grounded_heat_kernel(2.0, x, x)) < 8 * math.exp(-FOUR_PI2 * 2.0) * 1.01
    assert abs(grounded_heat_kernel(3.0, x, x)) < abs(grounded_heat_kernel(2.0, x, x))


def test_heat_kernel_grid_mean_is_aliased_sum():
    # on an M^4 grid the mean keeps exactly the modes n in M Z^4 \ {0}
    x = np.array([0.13, 0.71, 0.42, 0.05])
    M, t = 4, 0.02
    g = np.arange(M) / M
    rows = [grounded_heat_kernel(t, x, np.array([a, b, c, d]))
            for a in g for b in g for c in g for d in g]
    n = np.arange(-3, 4)
    k = np.array([(a, b, c, d) for a in n for b in n for c in n for d in n if (a, b, c, d) != (0, 0, 0, 0)])
    alias = np.sum(np.exp(-FOUR_PI2 * M**2 * np.sum(k**2, 1) * t) * np.cos(2 * np.pi * M * k @ x))
    assert np.mean(rows) == pytest.approx(alias, abs=1e-12)
    assert abs(np.mean(rows)) < 1e-5


# --- Green kernels ----------------------------------------------------------

def test_upper_gamma_matches_scipy_for_positive_order():
    from scipy import special
    for a in (0.5, 1.0, 2.5):
        for x in (0.1, 1.0, 7.0):
            assert upper_gamma(a, x) == pytest.approx(special.gamma(a) * special.gammaincc(a, x), rel=1e-12)
    assert upper_gamma(0.0, 1.0) == pytest.approx(special.exp1(1.0), rel=1e-12)
    # recurrence: Gamma(a+1, x) = a Gamma(a, x) + x^a e^-x
    a, x = -1.5, 0.7
    assert upper_gamma(a + 1, x) == pytest.approx(a * upper_gamma(a, x) + x**a * math.exp(-x), rel=1e-12)


@given(point, point)
@settings(max_examples=30, deadline=None)
def test_kernels_are_symmetric(x, y):
    if torus_distance(x, y) < 1e-3:
        return
    assert green_kernel(x, y) == pytest.approx(green_kernel(y, x), abs=1e-10)
    assert biharmonic_kernel(x, y) == pytest.approx(biharmonic_kernel(y, x), abs=1e-10)


def test_green_near_diagonal_law():
    x = np.array([0.3, 0.3, 0.3, 0.3])
    e = np.array([1.0, 0, 0, 0])
    d = 1e-3
    assert green_kernel(x, x + d * e) * d * d == pytest.approx(1 / FOUR_PI2, rel=0.02)


@pytest.mark.parametrize("s", [1.0, 1.5, 2.0, 3.0])
def test_split_evaluation_matches_fourier_table(s):
    x = np.array([0.1, 0.2, 0.3, 0.4])
    y = np.array([0.45, 0.7, 0.1, 0.9])
    table = KernelTable("fractional", 40, s)
    val = fractional_green_value(s, x, y)
    # the truncated Fourier sum is only an oracle when the tail is small
    tol = 1e-9 if s >= 2 else 2e-3
    assert val.value == pytest.approx(table.evaluate(x, y), abs=tol)
    assert val.error < 1e-10


def test_fractional_order_one_and_two_identities():
    x = np.array([0.05, 0.5, 0.25, 0.8])
    y = np.array([0.3, 0.1, 0.95, 0.6])
    assert fractional_green_kernel(1.0, x, y) == pytest.approx(green_kernel(x, y), abs=1e-10)
    assert EIGHT_PI2 * fractional_green_kernel(2.0, x, y) == pytest.approx(biharmonic_kernel(x, y), abs=1e-10)


def test_order_three_diagonal_matches_lattice_sum():
    N = 20
    ref = _lattice_sum(lambda n2: (FOUR_PI2 * n2) ** -3.0, N)
    # tail: sum_{|n|_inf > N} |n|^-6 <= int_{N}^inf 2 pi^2 r^3 (r - 1)^-6 dr
    tail = 2 * math.pi**2 * (N - 1) ** -2 * (0.5 + 1 / (N - 1) + 1 / (N - 1) ** 2) / FOUR_PI2**3
    val = fractional_green_value(3.0, np.zeros(4), np.zeros(4))
    assert ref <= val.value <= ref + tail
    assert math.isfinite(val.value)


def test_coincident_points_are_an_error():
    x = np.array([0.2, 0.2, 0.2, 0.2])
    with pytest.raises(ValueError):
        green_kernel(x, x)
    with pytest.raises(ValueError):
        biharmonic_kernel(x, x + 1.0)


def test_biharmonic_mode_weight():
    assert KernelTable("biharmonic", 2).weight((1, 0, 0, 0)) == pytest.approx(1 / (2 * math.pi**2), rel=1e-14)
    assert 1 / (2 * math.pi**2) == pytest.approx(0.050660, abs=1e-6)


def test_biharmonic_log_law_bounded():
    rng = np.random.default_rng(3)
    e = rng.normal(size=4)
    e /= np.linalg.norm(e)
    x = np.full(4, 0.4)
    vals = [biharmonic_kernel(x, x + d * e) + math.log(d) for d in np.logspace(-3, math.log10(0.5), 15)]
    assert np.all(np.isfinite(vals))
    assert max(abs(v) for v in vals) < 2.0


def test_biharmonic_equals_iterated_green():
    # 8 pi^2 int G(x,z) G(z,y) dz through the Fourier sum of G at moderate separation
    x = np.array([0.1, 0.2, 0.3, 0.4])
    y = np.array([0.6, 0.7, 0.3, 0.1])
    G = KernelTable("green", 30).weights
    table = SpectralField(30, EIGHT_PI2 * G**2)
    n = np.arange(-30, 31)
    z = x - y
    e = [np.exp(2j * np.pi * n * zk) for zk in z]
    val = np.einsum("abcd,a,b,c,d->", table.coefficients, *e).real
    assert val == pytest.approx(biharmonic_kernel(x, y), abs=1e-6)


def test_biharmonic_value_reports_error():
    v = biharmonic_value(np.zeros(4), np.full(4, 0.25))
    assert v.error >= 0 and v.error < 1e-10


def test_kernel_table_tail_bound():
    assert math.isinf(KernelTable("green", 8).tail_bound())
    t = KernelTable("fractional", 10, 3.0).tail_bound()
    ref_tail = _lattice_sum(lambda n2: (FOUR_PI2 * n2) ** -3.0, 30) - _lattice_sum(lambda n2: (FOUR_PI2 * n2) ** -3.0, 10)
    assert ref_tail <= t
    with pytest.raises(ValueError):
        KernelTable("nope", 2)


# --- spectral fields ---------------------------------------------------------

def _random_field(seed, cutoff=2):
    rng = np.random.default_rng(seed)
    modes = {}
    for n in [(1, 0, 0, 0), (0, 1, -1, 0), (2, 1, 0, -1), (0, 0, 0, 2)]:
        if any(abs(k) > cutoff for k in n):
            continue
        modes[n] = complex(rng.normal(), rng.normal())
    return SpectralField.from_modes(cutoff, modes)


def test_paneitz_examples():
    assert paneitz_energy(SpectralField.from_modes(1, {(0, 0, 0, 0): 3.0})) == 0.0
    u = SpectralField.from_modes(1, {(1, 0, 0, 0): 0.5})
    assert paneitz_energy(u) == pytest.approx(math.pi**2, rel=1e-14)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_energy_of_covariance_image_is_dual_form(seed):
    u = _random_field(seed)
    ku = apply_biharmonic(u)
    assert paneitz_energy(ku) == pytest.approx(biharmonic_form(u), rel=1e-12)
    # Parseval duality with the Green operator
    gu = apply_green(u)
    assert biharmonic_form(u) == pytest.approx(EIGHT_PI2 * gu.pairing(gu), rel=1e-12)


def test_sobolev_norm_examples():
    u = SpectralField.from_modes(1, {(1, 0, 0, 0): 0.5})
    g = np.arange(8) / 8
    X = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1)
    l2 = math.sqrt(np.mean(np.cos(2 * np.pi * X[..., 0]) ** 2))
    assert sobolev_norm(u, 0) == pytest.approx(l2, rel=1e-12)
    assert sobolev_norm(u, 1) == pytest.approx(math.pi * math.sqrt(2), rel=1e-12)


@given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(0.01, 2))
@settings(max_examples=20, deadline=None)
def test_sobolev_norm_monotone_in_s(seed, s, ds):
    u = _random_field(seed)
    assert sobolev_norm(u, s) <= sobolev_norm(u, s + ds) * (1 + 1e-12)


def test_spectral_field_evaluate_grid_and_cube_averages():
    u = _random_field(1)
    assert u.is_real and u.is_grounded
    g = np.arange(8) / 8
    X = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), axis=-1)
    assert np.allclose(u.grid_values(8), u.evaluate(X), atol=1e-12)
    # Gauss-Legendre cube averages are exact for these low-degree modes up to rounding
    from liouville4.haar import project_piecewise
    avg = project_piecewise(u.evaluate, 1, quadrature_order=8).values
    assert np.allclose(avg, u.cube_averages(1), atol=1e-9)


def test_from_function_recovers_modes():
    f = SpectralField.from_function(lambda X: np.cos(2 * np.pi * X[..., 0]) + 0.5 * np.sin(2 * np.pi * (X[..., 1] + X[..., 2])), 2, 8)
    assert f.coefficients[3, 2, 2, 2] == pytest.approx(0.5, abs=1e-14)
    assert f.coefficients[2, 3, 3, 2] == pytest.approx(-0.25j, abs=1e-14)
