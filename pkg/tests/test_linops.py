import dataclasses
import json

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from chlab.errors import InvalidParameter
from chlab.linops import (
    build_J,
    build_L1,
    build_Ln,
    build_recursion,
    build_weighted_JL1,
    commutator_residuals,
    discrete_essential_spectrum,
    eigen_spectrum,
    essential_curve_weighted,
    export_spectrum,
    hausdorff_distance,
    lambda_weighted,
    liouville_transform_potential,
    near_zero_subspace,
    resolved_subspace,
    semigroup_decay_rate,
    spectral_projections,
    symbol_curve,
    weight_bounds,
)
from chlab.soliton import build_profile, speed_derivative
from chlab.spectral import Grid, derivative, h1_norm

from conftest import band_limited

nr = np.linalg.norm


@pytest.fixture(scope="module")
def p(prof4_512):
    return prof4_512


@pytest.fixture(scope="module")
def rec(p):
    return build_recursion(p)


@pytest.fixture(scope="module")
def dphi_c(p):
    return speed_derivative(p.c, p.omega, p.grid, p.x_peak)[0]


@pytest.fixture(scope="module")
def proj(p):
    return spectral_projections(p, -0.3)


@pytest.fixture(scope="module")
def La(p):
    return build_weighted_JL1(p, -0.3)


def test_L1_symmetric_with_translation_kernel(p):
    L1 = build_L1(p)
    assert L1.symmetry_defect() < 1e-14
    assert nr(L1(p.dphi)) / nr(p.dphi) < 1e-6


def test_L1_speed_derivative(p, dphi_c):
    # differentiating the profile equation in c gives L1 d_c phi = -m
    assert nr(build_L1(p)(dphi_c) + p.m) / nr(p.m) < 1e-4


def test_L1_coercive_off_two_directions(p):
    L1 = build_L1(p)
    g = p.grid
    rng = np.random.default_rng(11)
    dm = derivative(p.m, g)
    B = np.linalg.qr(np.stack([p.m, dm], 1))[0]
    for _ in range(20):
        w = band_limited(g, rng, kmax=2.0, width=10.0)
        w -= B @ (B.T @ w)
        assert w @ L1(w) > 0


def test_L1_spectrum_has_one_negative_eigenvalue(p):
    rep = eigen_spectrum(build_L1(p))
    ev = rep.eigenvalues
    assert np.max(np.abs(ev.imag)) == 0.0
    assert np.sum(ev.real < -1e-8) == 1
    assert rep.near_zero.size == 1


def test_recursion_eigenrelations(p, rec):
    assert nr(rec["R"](p.m) - p.c * p.m) / nr(p.c * p.m) < 1e-5
    assert nr(rec["Rstar"](p.dphi) - p.c * p.dphi) / nr(p.c * p.dphi) < 1e-5


def test_recursion_maps_to_constant(p, rec):
    # R (1 - d^2) (m + omega)^{-1/2}: the d^{-1} m d term integrates in closed
    # form to -(s^{1/2} + omega s^{-1/2}) + 2 sqrt(omega), s = m + omega
    g = (p.m + p.omega) ** -0.5
    v = rec["R"](g - derivative(g, p.grid, 2))
    assert np.max(np.abs(v - 2 * np.sqrt(p.omega))) < 1e-6


def test_recursion_similarity(p, rec):
    g = p.grid
    A = np.eye(g.n) - np.array([derivative(e, g, 2) for e in np.eye(g.n)]).T
    R2 = A @ rec["K"].matrix @ np.linalg.inv(A)
    assert nr(R2 - rec["R"].matrix) / nr(rec["R"].matrix) < 1e-8


def test_recursion_requires_positive_momentum(p):
    bad = dataclasses.replace(p, m=-2 * p.omega * np.ones(p.grid.n))
    with pytest.raises(InvalidParameter):
        build_recursion(bad)


def test_Ln_hierarchy(p, rec):
    assert np.array_equal(build_Ln(p, 1).matrix, build_L1(p).matrix)
    L2, L3 = build_Ln(p, 2, rec), build_Ln(p, 3, rec)
    R = rec["R"].matrix
    assert nr(L3.matrix - R @ L2.matrix) / nr(L3.matrix) < 1e-12
    with pytest.raises(InvalidParameter):
        build_Ln(p, 0)


def test_L2_kernel_and_speed_derivative(p, rec, dphi_c):
    L2 = build_Ln(p, 2, rec)
    assert nr(L2(p.dphi)) / nr(p.dphi) < 1e-6
    assert nr(L2(dphi_c) + p.c * p.m) / nr(p.c * p.m) < 1e-3


@pytest.mark.parametrize("n", [1, 2, 3])
def test_commutator_identities(p, n):
    res = commutator_residuals(p, n)
    assert res["r1"] < 1e-6
    assert res["r2"] < 1e-6
    assert res["r_adj"] < 1e-8
    assert res["r_sym"] < 1e-8


def test_commutators_on_the_vacuum(p):
    z = np.zeros(p.grid.n)
    vac = dataclasses.replace(p, phi=z, dphi=z, m=z)
    Q = resolved_subspace(p)
    res = commutator_residuals(vac, 2, basis=Q)
    assert res["r1"] < 1e-12 and res["r2"] < 1e-12


def test_symbol_curve_values():
    assert symbol_curve(1, 4.0, 1.0, 0.0) == 0
    assert symbol_curve(1, 4.0, 1.0, 1.0) == pytest.approx(-3j)
    with pytest.raises(InvalidParameter):
        symbol_curve(0, 4.0, 1.0, 1.0)


@given(st.integers(1, 4), st.floats(-50, 50), st.floats(2.1, 8.0))
def test_symbol_curve_is_imaginary_and_odd(n, z, c):
    s = symbol_curve(n, c, 1.0, z)
    assert s.real == 0.0
    assert symbol_curve(n, c, 1.0, -z) == pytest.approx(-s, abs=1e-12)


def test_symbol_matches_free_operator(grid512):
    # J L_n with phi = 0 is the Fourier multiplier of the symbol
    g = grid512
    k = 2 * np.pi * 3 / g.length
    f = np.cos(k * g.x)
    z = np.zeros(g.n)
    vac = dataclasses.replace(build_profile(4.0, 1.0, g), phi=z, dphi=z, m=z)
    out = build_J(g)(build_Ln(vac, 2)(f))
    s = symbol_curve(2, 4.0, 1.0, k)
    assert np.max(np.abs(out - (s * np.exp(1j * k * g.x)).real)) < 1e-12


def test_weight_constants():
    assert lambda_weighted(4.0, 1.0, -0.3) == pytest.approx(-0.540659, abs=5e-7)
    a1, a_star = weight_bounds(4.0, 1.0)
    assert a1 == pytest.approx(-0.707107, abs=5e-7)
    assert a_star == pytest.approx(-0.468213, abs=5e-7)


def test_optimal_weight_maximizes_edge():
    a = np.linspace(-0.7, -0.01, 20001)
    lam = np.array([lambda_weighted(4.0, 1.0, x) for x in a])
    assert a[np.argmin(lam)] == pytest.approx(weight_bounds(4.0, 1.0)[1], abs=1e-4)


def test_weighted_operator_at_zero_weight(p):
    A = build_weighted_JL1(p, 0.0).matrix
    B = build_J(p.grid).matrix @ build_L1(p).matrix
    assert nr(A - B) / nr(B) < 1e-12


def test_weight_out_of_range(p):
    for a in (0.1, -0.8):
        with pytest.raises(InvalidParameter):
            build_weighted_JL1(p, a)


def test_essential_curve_edge_and_asymptote():
    lam = lambda_weighted(4.0, 1.0, -0.3)
    assert essential_curve_weighted(4.0, 1.0, -0.3, 0.0) == pytest.approx(lam, abs=1e-14)
    far = essential_curve_weighted(4.0, 1.0, -0.3, 1e6)
    assert far.real == pytest.approx(-0.3 * 4.0, abs=1e-6)
    k = np.linspace(-50, 50, 200001)
    assert np.nanmax(essential_curve_weighted(4.0, 1.0, -0.3, k).real) == pytest.approx(lam, abs=1e-9)


def test_weighted_spectrum(p, La):
    rep = eigen_spectrum(La, near_zero_tol=1e-4)
    lam = lambda_weighted(p.c, p.omega, -0.3)
    assert rep.near_zero.size == 2
    assert rep.max_real_rest < lam / 2
    rest = rep.eigenvalues[np.abs(rep.eigenvalues) >= 1e-4]
    ess = discrete_essential_spectrum(p.grid, p.c, p.omega, -0.3)
    # the soliton moves the discrete spectrum only slightly off the free one
    assert hausdorff_distance(rest, ess, directed=True) < 0.2


def _essential_distance(n, length):
    g = Grid(n, length)
    q = build_profile(4.0, 1.0, g)
    ev = eigen_spectrum(build_weighted_JL1(q, -0.3)).eigenvalues
    rest = ev[np.abs(ev) >= 1e-4]
    return hausdorff_distance(rest, discrete_essential_spectrum(g, 4.0, 1.0, -0.3), directed=True)


def test_essential_distance_shrinks_with_box():
    # at fixed spacing the soliton shifts the box modes by O(1/L)
    d1, d2 = _essential_distance(512, 80.0), _essential_distance(1024, 160.0)
    assert 1.8 < d1 / d2 < 2.2


@pytest.mark.slow
def test_essential_distance_large_box():
    assert _essential_distance(2048, 320.0) < 0.05


def test_unweighted_spectrum_is_imaginary(p):
    rep = eigen_spectrum(build_weighted_JL1(p, 0.0))
    assert np.max(np.abs(rep.eigenvalues.real)) < 1e-8


def test_near_zero_subspace_is_the_jordan_chain(p, dphi_c):
    V = near_zero_subspace(build_weighted_JL1(p, 0.0))
    B = np.linalg.qr(np.stack([p.dphi, dphi_c], 1))[0].astype(complex)
    # the box adds constant and Nyquist zeros; the chain lies inside the cluster
    assert np.max(sla.subspace_angles(V, B)) < 1e-6


def test_projection_properties(p, proj, La):
    assert np.max(np.abs(proj.gram - np.eye(2))) < 1e-5
    P = proj.P.matrix
    assert nr(P @ P - P) / nr(P) < 1e-8
    assert nr(La.matrix @ P - P @ La.matrix) / nr(La.matrix) < 1e-5
    assert nr(proj.P(proj.f1) - proj.f1) / nr(proj.f1) < 1e-8
    assert nr(proj.Q(proj.f2)) / nr(proj.f2) < 1e-8


def test_jordan_chain(p, proj, La):
    assert nr(La(proj.f1)) / nr(proj.f1) < 1e-5
    assert nr(La(proj.f2) - proj.f1) / nr(proj.f1) < 1e-3


def _w0(p, proj, seed=5):
    g = p.grid
    return proj.Q(band_limited(g, np.random.default_rng(seed), kmax=3.0))


def test_semigroup_decay(p, proj, La):
    w0 = _w0(p, proj)
    r = semigroup_decay_rate(p, -0.3, w0, 20.0, 0.5, projections=proj, operator=La)
    assert r["rate"] <= -0.05
    assert r["r2"] > 0.99
    assert r["norms"][-1] < r["norms"][0]
    r10 = semigroup_decay_rate(p, -0.3, 10 * w0, 20.0, 0.5, projections=proj, operator=La)
    assert abs(r10["rate"] - r["rate"]) < 1e-8


def test_kernel_mode_does_not_decay(p, proj, La):
    # the unprojected translation mode is rejected; projected data is accepted
    with pytest.raises(InvalidParameter, match="generalized kernel"):
        semigroup_decay_rate(p, -0.3, proj.f1, projections=proj, operator=La)
    with pytest.raises(InvalidParameter):
        semigroup_decay_rate(p, -0.3, _w0(p, proj), T=5.0, projections=proj, operator=La)
    assert h1_norm(proj.Q(proj.f1), p.grid) < 1e-8 * h1_norm(proj.f1, p.grid)


def test_liouville_potential_shape():
    z = np.linspace(-8, 8, 401)
    V = liouville_transform_potential(6.0, 1.0, z)
    assert np.max(np.abs(V - V[::-1])) < 1e-13
    assert abs(V[0]) < 1e-4 and abs(V[-1]) < 1e-4
    with pytest.raises(InvalidParameter):
        liouville_transform_potential(2.0, 1.0, z)


def test_liouville_potential_against_finite_differences():
    c, w = 6.0, 1.0
    z = np.linspace(-6, 6, 121)
    A = c - 2 * w
    psi = lambda s: A / np.cosh(s * np.sqrt(A) / 2) ** 2  # noqa: E731
    h = 1e-3
    d1 = (psi(z - 2 * h) - 8 * psi(z - h) + 8 * psi(z + h) - psi(z + 2 * h)) / (12 * h)
    d2 = (-psi(z - 2 * h) + 16 * psi(z - h) - 30 * psi(z) + 16 * psi(z + h) - psi(z + 2 * h)) / (12 * h * h)
    q = c - psi(z)
    Vfd = -3 * psi(z) + 3 * d2 / (4 * q) + 5 * d1**2 / (16 * q * q)
    assert np.max(np.abs(liouville_transform_potential(c, w, z) - Vfd)) < 1e-6


def test_liouville_rational_form():
    z = np.linspace(-8, 8, 401)
    S = 1 / np.cosh(z) ** 2
    rational = (-90 * S + 110 * S**2 - 35 * S**3) / (3 - 2 * S) ** 2
    assert np.max(np.abs(liouville_transform_potential(6.0, 1.0, z) - rational)) < 1e-10


def test_hausdorff_distance():
    a = np.array([0, 1j])
    b = np.array([0, 1j, 3])
    assert hausdorff_distance(a, b, directed=True) == 0.0
    assert hausdorff_distance(a, b) == pytest.approx(3.0)
    assert hausdorff_distance(a, np.array([np.nan, 0]), directed=True) == 1.0


def test_export_spectrum(p, tmp_path):
    rep = eigen_spectrum(build_L1(p), metadata={"grid": p.grid.n})
    csv_path, json_path = export_spectrum(rep, tmp_path)
    assert csv_path.read_text().splitlines()[0] == "re,im"
    meta = json.loads(json_path.read_text())
    assert meta["count"] == p.grid.n and meta["grid"] == p.grid.n
