import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from chlab.errors import InvalidParameter
from chlab.gkdv import (
    build_L1_gkdv,
    build_Ln_gkdv,
    build_Q,
    build_recursion_gkdv,
    commutator_residuals_gkdv,
    continuum_decomposition,
    default_grid,
    generalized_kernel_residuals,
    jost_kdv,
    jost_zs_mkdv,
    kdv_eigen_residual,
    liouville_decay_gkdv,
    mkdv_adjoint_residuals,
    modulo_constants,
    project_out_kernel,
    squared_eigenfunction_kdv,
    squared_eigenfunction_mkdv,
)
from chlab.spectral import Grid, derivative, h1_norm


@pytest.fixture(scope="module", params=[2, 3])
def prof(request):
    return build_Q(request.param, 1.0, default_grid())


@pytest.fixture(scope="module")
def kdv():
    return build_Q(2, 1.0, default_grid())


@pytest.fixture(scope="module")
def mkdv():
    return build_Q(3, 1.0, default_grid())


@pytest.fixture(scope="module")
def small():
    return {p: build_Q(p, 1.0, Grid(256, 25 * np.pi)) for p in (2, 3)}


def test_peak_values(kdv, mkdv):
    j = np.argmin(np.abs(kdv.y))
    assert kdv.Q[j] == pytest.approx(1.5, abs=1e-12)
    assert mkdv.Q[j] == pytest.approx(np.sqrt(2), abs=1e-12)


def test_profile_ode(prof):
    assert prof.ode_residual() < 1e-10
    assert np.max(np.abs(derivative(prof.Q, prof.grid) - prof.dQ)) < 1e-10


@given(st.floats(min_value=0.3, max_value=3.0))
def test_profile_scaling(c):
    g = default_grid(256)
    a = build_Q(2, c, g)
    b = build_Q(2, 1.0, g)
    # Q_c(y) = c Q(sqrt(c) y) for KdV
    y = a.y
    ref = c * 1.5 / np.cosh(0.5 * np.sqrt(c) * y) ** 2
    assert np.max(np.abs(a.Q - ref)) < 1e-12 * c
    assert np.max(np.abs(b.Q - 1.5 / np.cosh(0.5 * y) ** 2)) < 1e-14


def test_invalid_parameters():
    with pytest.raises(InvalidParameter, match="invalid nonlinearity"):
        build_Q(4)
    with pytest.raises(InvalidParameter):
        build_Q(2, -1.0)
    with pytest.raises(InvalidParameter):
        jost_kdv(-1j, np.zeros(3))
    with pytest.raises(InvalidParameter):
        jost_kdv(1.0, np.zeros(3), "chi")
    with pytest.raises(InvalidParameter):
        jost_zs_mkdv(-0.5j, np.zeros(3))


def test_kdv_jost_value_and_asymptotics():
    assert jost_kdv(1.0, np.array([0.0]))["v"][0] == pytest.approx(0.5 - 0.5j, abs=1e-15)
    x = np.array([30.0])
    assert jost_kdv(0.7, x)["v"][0] == pytest.approx(np.exp(0.7j * 30), abs=1e-12)
    assert jost_kdv(0.7, -x, "phi")["v"][0] == pytest.approx(np.exp(0.7j * 30), abs=1e-12)


@given(st.floats(min_value=0.1, max_value=5.0))
def test_kdv_jost_residual(kappa):
    x = np.linspace(-20, 20, 801)
    for which in ("psi", "phi"):
        assert jost_kdv(kappa, x, which)["residual"] < 1e-8


def test_kdv_jost_against_ode_integration():
    # integrate from the right with plane-wave data and compare
    kappa = 1.3
    x0 = 15.0
    j0 = jost_kdv(kappa, np.array([x0]))

    def rhs(x, v):
        return [v[1], -(2 / np.cosh(x) ** 2 + kappa**2) * v[0]]

    sol = solve_ivp(rhs, (x0, -5.0), [j0["v"][0], j0["dv"][0]], rtol=1e-12, atol=1e-14,
                    t_eval=np.linspace(x0, -5.0, 41))
    exact = jost_kdv(kappa, sol.t)["v"]
    assert np.max(np.abs(sol.y[0] - exact)) < 1e-8


def test_zs_values_and_residual():
    x = np.array([0.0])
    J = jost_zs_mkdv(0.0, x)
    assert np.allclose(J["phi"][0][:, 0], [0, 1], atol=1e-15)
    xs = np.linspace(-20, 20, 401)
    for zeta in (0.3, -1.1, 0.2 + 0.1j):
        assert jost_zs_mkdv(zeta, xs)["residual"] < 1e-8


def test_zs_asymptotics():
    zeta = 0.3
    L = np.array([-30.0])
    R = np.array([30.0])
    J = jost_zs_mkdv(zeta, L)
    assert np.allclose(J["phi"][0][:, 0] * np.exp(1j * zeta * L[0]), [1, 0], atol=1e-12)
    assert np.allclose(J["phit"][0][:, 0] * np.exp(-1j * zeta * L[0]), [0, -1], atol=1e-12)
    J = jost_zs_mkdv(zeta, R)
    assert np.allclose(J["psi"][0][:, 0] * np.exp(-1j * zeta * R[0]), [0, 1], atol=1e-12)
    assert np.allclose(J["psit"][0][:, 0] * np.exp(1j * zeta * R[0]), [1, 0], atol=1e-12)


def test_zs_squared_eigenfunction_closed_form():
    x = np.linspace(-10, 10, 201)
    k = 0.8
    v, _ = jost_zs_mkdv(k / 2, x)["phi"]
    assert np.max(np.abs(v[1] ** 2 - v[0] ** 2 - squared_eigenfunction_mkdv(k, x))) < 1e-13


def test_kdv_squared_eigenfunction_is_phi_squared():
    x = np.linspace(-10, 10, 201)
    F, dF = squared_eigenfunction_kdv(1.0, x)
    assert np.max(np.abs(F - jost_kdv(1.0, x / 2, "phi")["v"] ** 2)) < 1e-14
    h = 1e-5
    fd = (squared_eigenfunction_kdv(1.0, x + h)[0] - squared_eigenfunction_kdv(1.0, x - h)[0]) / (2 * h)
    assert np.max(np.abs(dF - fd)) < 1e-8


def test_kdv_eigenrelation(kdv):
    assert kdv_eigen_residual(kdv, 1.0) < 1e-5
    # off-eigenvalue check: the same F is not an eigenfunction for another kappa^2
    F, _ = squared_eigenfunction_kdv(1.0, kdv.y)
    R = build_recursion_gkdv(2, kdv)["R"].matrix
    r = modulo_constants(R @ F - 1.5 * F)
    assert np.linalg.norm(r) / np.linalg.norm(F) > 0.1
    with pytest.raises(InvalidParameter):
        kdv_eigen_residual(build_Q(3), 1.0)


def test_modulo_constants():
    assert np.allclose(modulo_constants(np.array([1.0, 2.0, 3.0])), [-1, 0, 1])


def test_mkdv_adjoint_relations(mkdv):
    r = mkdv_adjoint_residuals(mkdv)
    assert r["translation"] < 1e-6
    assert r["scaling"] < 1e-5
    with pytest.raises(InvalidParameter):
        mkdv_adjoint_residuals(build_Q(2))


@pytest.mark.parametrize("n", [1, 2])
def test_generalized_kernel(prof, n):
    r = generalized_kernel_residuals(prof, n)
    assert r["kernel"] < 1e-6
    assert r["scaling"] < 1e-5


@pytest.mark.parametrize("n", [1, 2])
def test_commutators(prof, n):
    r = commutator_residuals_gkdv(prof, n)
    assert r["r1"] < 1e-6
    assert r["r2"] < 1e-6
    assert r["r2_raw"] >= r["r2"]


def test_Ln_orders(kdv):
    with pytest.raises(InvalidParameter):
        build_Ln_gkdv(2, 3, kdv)
    L1 = build_L1_gkdv(kdv).matrix
    assert np.array_equal(build_Ln_gkdv(2, 1, kdv).matrix, L1)


def test_L1_negative_even_ground_state(kdv):
    L1 = build_L1_gkdv(kdv).matrix
    vals, vecs = np.linalg.eigh(0.5 * (L1 + L1.T))
    assert vals[0] < 0 < vals[2]
    assert abs(vals[1]) < 1e-6
    v0 = vecs[:, 0]
    assert np.linalg.norm(v0 - np.roll(v0[::-1], 1)) / np.linalg.norm(v0) < 1e-8


def _w0(prof, seed=0):
    g = prof.grid
    w = np.exp(-((prof.y / 4) ** 2)) * np.random.default_rng(seed).standard_normal(g.n)
    fh = np.fft.rfft(w)
    fh[g.k > g.kmax / 4] = 0
    return np.fft.irfft(fh, g.n)


@pytest.mark.parametrize("p", [2, 3])
def test_weighted_decay(small, p):
    prof = small[p]
    w0 = project_out_kernel(p, 1, -0.2, _w0(prof), prof)
    dec = liouville_decay_gkdv(p, 1, -0.2, w0, T=40.0, dt=0.5, profile=prof)
    assert dec["rate"] <= -0.02
    assert dec["r2"] > 0.9
    dec10 = liouville_decay_gkdv(p, 1, -0.2, 10 * w0, T=40.0, dt=0.5, profile=prof)
    assert dec10["rate"] == pytest.approx(dec["rate"], abs=1e-8)


def test_weighted_decay_second_order(small):
    prof = small[2]
    w0 = project_out_kernel(2, 2, -0.2, _w0(prof), prof)
    assert liouville_decay_gkdv(2, 2, -0.2, w0, profile=prof)["rate"] < 0


def test_unweighted_translation_mode_persists(small):
    # Q' is a steady state of the unweighted flow
    prof = small[2]
    dec = liouville_decay_gkdv(2, 1, 0.0, prof.dQ, T=10.0, dt=0.5, profile=prof)
    assert np.max(np.abs(dec["norms"] / dec["norms"][0] - 1)) < 1e-6


def test_decay_requires_projection(small):
    prof = small[2]
    with pytest.raises(InvalidParameter, match="generalized kernel"):
        liouville_decay_gkdv(2, 1, -0.2, prof.dQ, profile=prof)
    with pytest.raises(InvalidParameter):
        liouville_decay_gkdv(2, 1, 0.3, prof.dQ, profile=prof)
    with pytest.raises(InvalidParameter):
        liouville_decay_gkdv(2, 1, -0.2, prof.dQ, T=1.0, profile=prof)


def test_projection_is_idempotent(small):
    prof = small[3]
    w = _w0(prof, 3)
    a = project_out_kernel(3, 1, -0.2, w, prof)
    b = project_out_kernel(3, 1, -0.2, a, prof)
    assert h1_norm(a - b, prof.grid) < 1e-8 * h1_norm(a, prof.grid)


@pytest.mark.parametrize("p", [2, 3])
def test_continuum_decomposition_improves(p):
    prof = build_Q(p, 1.0, default_grid())
    f = np.exp(-prof.y**2 / 2) * (1 + 0.5 * prof.y)
    errs = [continuum_decomposition(f, prof, np.linspace(-8, 8, m))["error"] for m in (64, 256)]
    assert errs[1] < errs[0]
    assert errs[1] < 1e-2


def test_discrete_modes_are_reproduced(kdv):
    dec = continuum_decomposition(kdv.dQ + 0.5 * kdv.scaling_mode, kdv, np.linspace(-8, 8, 32))
    assert dec["error"] < 1e-10
