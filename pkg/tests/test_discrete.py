import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liouville4 import discrete as D
from liouville4.haar import GridField
from liouville4.rng import SeededStream
from liouville4.spectral_core import EIGHT_PI2


def _grounded(level, seed):
    v = np.random.default_rng(seed).normal(size=(2**level,) * 4)
    return GridField(level, v - v.mean(), grounded=True)


def _dense_laplacian(level):
    P = 2**level
    n = P**4
    return np.stack([D.discrete_laplacian(b.reshape((P,) * 4)).ravel() for b in np.eye(n)])


def test_laplacian_kills_constants_and_has_plane_wave_eigenvalues():
    assert np.all(D.discrete_laplacian(GridField(2, np.full((4,) * 4, 3.0))) == 0)
    lvl, P = 3, 8
    i = np.indices((P,) * 4)
    u = np.cos(2 * np.pi * i[0] / P)
    lam = 2.0 ** (2 * lvl + 3) * (1 - (3 + math.cos(2 * math.pi / P)) / 4)
    assert np.allclose(D.discrete_laplacian(u), -lam * u, atol=1e-10)
    assert D.eigenvalues(lvl)[1, 0, 0, 0] == pytest.approx(lam, rel=1e-14)


def test_level_one_spectrum_matches_dense_matrix():
    ev = np.sort(np.linalg.eigvalsh(-_dense_laplacian(1)))
    assert np.allclose(ev, np.sort(D.eigenvalues(1).ravel()), atol=1e-10)


def test_spectral_gap_examples():
    assert D.spectral_gap(1) == 16.0
    assert D.spectral_gap(2) == pytest.approx(32.0, rel=1e-14)
    ev = np.sort(np.linalg.eigvalsh(-_dense_laplacian(2)))
    assert ev[1] == pytest.approx(D.spectral_gap(2), rel=1e-12)
    assert D.spectral_gap(6) == pytest.approx(4 * math.pi**2, rel=0.01)
    gaps = [D.spectral_gap(l) for l in range(1, 9)]
    assert all(b > a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 4 * math.pi**2


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_laplacian_self_adjoint(seed):
    u, v = _grounded(2, seed), _grounded(2, seed + 1)
    lu = GridField(2, D.discrete_laplacian(u))
    lv = GridField(2, D.discrete_laplacian(v))
    assert u.inner(lv) == pytest.approx(lu.inner(v), abs=1e-10)


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_walk_preserves_constants_and_contracts(seed):
    lvl = 2
    u = _grounded(lvl, seed)
    # the plain walk p = I + Delta / 2^(2l+3)
    pu = u.values + D.discrete_laplacian(u) / 2.0 ** (2 * lvl + 3)
    assert np.allclose(np.full((4,) * 4, 2.0) + D.discrete_laplacian(np.full((4,) * 4, 2.0)), 2.0)
    assert np.sqrt(np.mean(pu**2)) <= np.sqrt(np.mean(u.values**2)) + 1e-12


def test_green_inverse_property_level_three():
    u = _grounded(3, 1)
    g = D.discrete_green_apply(u)
    assert np.abs(-D.discrete_laplacian(g) - u.values).max() < 1e-10


def test_green_three_way_agreement():
    u = _grounded(2, 2)
    a = D.discrete_green_apply(u).values
    assert np.abs(a - D.discrete_green_apply(u, "dense").values).max() < 1e-10
    res = D.neumann_series(u)
    assert np.abs(a - res.field.values).max() < 1e-9
    assert res.tail_bound < 1e-12 and res.terms > 10


def test_green_method_limits():
    with pytest.raises(ValueError):
        D.discrete_green_apply(_grounded(3, 0), "dense")
    with pytest.raises(ValueError):
        D.discrete_green_apply(_grounded(1, 0), "magic")
    with pytest.raises(TypeError):
        D.discrete_green_apply(np.zeros((2,) * 4))


def test_plain_walk_has_eigenvalue_minus_one():
    # why the series uses the lazy walk: the checkerboard mode flips sign under p
    lvl = 2
    i = np.indices((4,) * 4).sum(axis=0)
    chk = (-1.0) ** i
    p_chk = chk + D.discrete_laplacian(chk) / 2.0 ** (2 * lvl + 3)
    assert np.allclose(p_chk, -chk)


def test_discrete_field_equation_per_sample():
    stream = SeededStream(3)
    lvl = 2
    h = D.sample_discrete_field(lvl, stream)
    xi = D.white_noise(lvl, SeededStream(3))
    assert np.abs(-D.discrete_laplacian(h) - math.sqrt(8) * math.pi * xi.values).max() < 1e-10


def test_site_variance_matches_diagonal():
    lvl = 2
    stream = SeededStream(5)
    x = np.array([D.sample_discrete_field(lvl, stream.replica(r)).values[1, 2, 3, 0] for r in range(10000)])
    ref = D.diagonal_variance(lvl)
    x2 = x**2
    assert abs(x2.mean() - ref) < 3 * x2.std(ddof=1) / math.sqrt(len(x2))


def test_pairing_variance_identity():
    lvl = 2
    stream = SeededStream(6)
    u = _grounded(lvl, 9)
    g = D.discrete_green_apply(u)
    ref = EIGHT_PI2 * g.inner(g)
    vals = np.array([D.sample_discrete_field(lvl, stream.replica(r)).inner(u) for r in range(10000)])
    v2 = vals**2
    assert abs(v2.mean() - ref) < 3 * v2.std(ddof=1) / math.sqrt(len(v2))


def test_diagonal_variance_values_and_routes():
    assert D.diagonal_variance(1) == pytest.approx(1.8526926664371295, rel=1e-12)
    for lvl in (1, 2, 3):
        assert D.diagonal_variance_green(lvl) == pytest.approx(D.diagonal_variance(lvl), rel=1e-12)
    val, tail = D.diagonal_variance_walk(2, 3000)
    assert abs(val - D.diagonal_variance(2)) < 1e-8
    assert tail < 1e-12


def test_diagonal_variance_independent_of_site():
    lvl = 2
    P = 4
    vals = []
    for site in [(0, 0, 0, 0), (1, 3, 2, 0)]:
        delta = np.zeros((P,) * 4)
        delta[site] = 1.0
        col = D.discrete_green_apply(GridField(lvl, delta)).values
        vals.append(EIGHT_PI2 * P**4 * np.sum(col**2))
    assert vals[0] == pytest.approx(vals[1], abs=1e-12)


def test_diagonal_variance_grows_like_log2():
    levels = np.arange(2, 7)
    slope = np.polyfit(levels, [D.diagonal_variance(int(l)) for l in levels], 1)[0]
    assert slope == pytest.approx(math.log(2), rel=0.05)


def test_extend_and_restrict():
    u = _grounded(2, 4)
    e = D.extend_piecewise(u)
    assert np.array_equal(D.restrict(e, 2).values, u.values)
    assert e.l2_norm() == pytest.approx(u.l2_norm(), rel=1e-15)
    # piecewise constant: refining and evaluating anywhere inside a cube gives the cube value
    assert e.evaluate([0.26, 0.51, 0.99, 0.0]) == u.values[1, 2, 3, 0]
    m = D.restrict(lambda X: X[..., 0], 1, "midpoint")
    assert np.allclose(m.values[0], 0.25) and np.allclose(m.values[1], 0.75)
    with pytest.raises(ValueError):
        D.restrict(u, 2, "center")


def test_gibbs_density():
    assert D.gibbs_log_density(GridField(2, np.zeros((4,) * 4))) == 0.0
    a, b = _grounded(2, 1), _grounded(2, 2)
    qa = -np.mean(D.discrete_laplacian(a) ** 2) / (16 * math.pi**2)
    qb = -np.mean(D.discrete_laplacian(b) ** 2) / (16 * math.pi**2)
    assert D.gibbs_log_density(a) - D.gibbs_log_density(b) == pytest.approx(qa - qb, abs=1e-10)
    stream = SeededStream(8)
    vals = np.array([D.gibbs_log_density(D.sample_discrete_field(2, stream.replica(r))) for r in range(2000)])
    assert abs(vals.mean() + (256 - 1) / 2) < 3 * vals.std(ddof=1) / math.sqrt(len(vals))


def test_level_one_law_matches_gibbs_quadratic_form():
    # covariance of the 15 grounded DFT coordinates equals the inverse of the form matrix
    lvl = 1
    L = _dense_laplacian(lvl)
    # log density -(1/16 pi^2) 2^(-4l) |L z|^2 = -z^T Q z / 2
    Q = 2 * L.T @ L / (16 * math.pi**2 * 2 ** (4 * lvl))
    w, V = np.linalg.eigh(L)
    basis = V[:, np.abs(w) > 1e-9]  # 15 grounded directions
    cov_ref = np.linalg.inv(basis.T @ Q @ basis)
    stream = SeededStream(10)
    Z = np.array([D.sample_discrete_field(lvl, stream.replica(r)).values.ravel() for r in range(100_000)]) @ basis
    est = np.cov(Z.T)
    se = np.sqrt((np.diag(cov_ref)[:, None] * np.diag(cov_ref)[None, :] + cov_ref**2) / len(Z))
    assert np.mean(np.abs(est - cov_ref) > 3 * se) < 0.02


def test_haar_and_site_constructions_agree_in_law():
    lvl = 2
    stream = SeededStream(12)
    A = np.array([D.sample_discrete_field(lvl, stream.replica(r)).values.ravel() for r in range(4000)])
    B = np.array([D.sample_discrete_field(lvl, stream.replica(r), "haar").values.ravel() for r in range(4000)])
    lam = D.eigenvalues(lvl)
    safe = np.where(lam > 0, lam, 1.0)
    ref_table = np.fft.fftn(np.where(lam > 0, EIGHT_PI2 / safe**2, 0.0)).real
    idx = np.indices((4,) * 4).reshape(4, -1).T
    d = np.mod(idx[:, None, :] - idx[None, :, :], 4)
    ref = ref_table[d[..., 0], d[..., 1], d[..., 2], d[..., 3]]
    assert ref[0, 0] == pytest.approx(D.diagonal_variance(lvl), rel=1e-12)
    for X in (A, B):
        C = np.cov(X.T)
        se = np.sqrt((np.diag(ref)[:, None] * np.diag(ref)[None, :] + ref**2) / len(X))
        assert np.mean(np.abs(C - ref) > 3 * se) < 0.02
    # the two sample covariance matrices agree with each other
    CA, CB = np.cov(A.T), np.cov(B.T)
    se2 = np.sqrt(2) * np.sqrt((np.diag(ref)[:, None] * np.diag(ref)[None, :] + ref**2) / len(A))
    assert np.mean(np.abs(CA - CB) > 3 * se2) < 0.02


def test_invalid_level():
    with pytest.raises(ValueError):
        D.spectral_gap(0)
    with pytest.raises(ValueError):
        D.sample_discrete_field(1, SeededStream(0), "other")
