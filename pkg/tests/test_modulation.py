import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from chlab.dynamics import Trajectory, evolve, peak_speed
from chlab.errors import InvalidParameter, NumericalBreakdown
from chlab.experiments import perturbed_run
from chlab.io import read_csv
from chlab.modulation import (
    bump,
    decompose,
    export_track_csv,
    functionals,
    localization_radius,
    monotonicity_slack,
    psi_one,
    psi_weight,
    right_tail_decay,
    track,
)
from chlab.multisoliton import random_perturbation, superposition
from chlab.soliton import build_profile
from chlab.spectral import Grid, derivative, h1_norm, integrate, translate

G = Grid(1024, 80.0)


@pytest.fixture(scope="module")
def run():
    return perturbed_run(4096, 320.0, 4.0, 1.0, -120.0, 0.01, 8.0, 2.0, 0, 40.0, 0.02, 25)


def test_bump_mass():
    assert quad(lambda y: bump(np.array([y]))[0], -1, 1, epsabs=1e-14)[0] == pytest.approx(0.5, abs=1e-12)
    assert bump(np.array([1.0, -1.0, 2.0])).tolist() == [0.0, 0.0, 0.0]


def test_psi_one_limits_and_midpoint():
    z = np.array([-60.0, 0.0, 60.0])
    v = psi_one(z)
    assert v[0] < 1e-25 and v[2] == pytest.approx(1.0, abs=1e-15)
    assert v[1] == pytest.approx(0.5, abs=1e-12)


@given(st.floats(min_value=-30, max_value=30))
def test_psi_one_antisymmetry(z):
    v = psi_one(np.array([z, -z]))
    assert v[0] + v[1] == pytest.approx(1.0, abs=1e-12)


def test_psi_one_is_increasing_and_smooth():
    z = np.linspace(-5, 5, 4001)
    v = psi_one(z)
    assert np.all(np.diff(v) > 0)
    # derivative is bump * exp(-|.|) convolution: continuous across z = +-1
    d = np.diff(v) / np.diff(z)
    assert np.max(np.abs(np.diff(d))) < 1e-3


def test_psi_one_derivative_is_the_convolution():
    # Psi_1' = int bump(y) exp(-|z - y|) dy
    for z in (-0.4, 0.3, 2.0):
        ref = quad(lambda y: bump(np.array([y]))[0] * np.exp(-abs(z - y)), -1, 1, epsabs=1e-14, points=[z])[0]
        h = 1e-5
        fd = (psi_one(np.array([z + h]))[0] - psi_one(np.array([z - h]))[0]) / (2 * h)
        assert fd == pytest.approx(ref, abs=1e-8)


def test_psi_weight_tail_rate():
    K = 3.0
    w = psi_weight(G, K)
    sel = (G.x > -30) & (G.x < -10)
    slope = np.polyfit(G.x[sel], np.log(w.field[sel]), 1)[0]
    assert slope == pytest.approx(1 / K, rel=1e-10)
    with pytest.raises(InvalidParameter):
        psi_weight(G, 0.5)


def test_decompose_exact_soliton():
    p = build_profile(4.0, 1.0, G, x_peak=1.3)
    st_ = decompose(p.phi, G, 1.0, [(4.05, 1.0)])
    assert st_.cs[0] == pytest.approx(4.0, abs=1e-8)
    assert st_.xs[0] == pytest.approx(1.3, abs=1e-8)
    assert h1_norm(st_.v, G) < 1e-7


def test_decompose_perturbed_soliton():
    p = build_profile(4.0, 1.0, G)
    pert = random_perturbation(G, np.random.default_rng(2), 0.0)
    u = p.phi + 0.01 * pert
    st_ = decompose(u, G, 1.0, [(4.0, 0.0)])
    dm = derivative(build_profile(st_.cs[0], 1.0, G, x_peak=st_.xs[0]).m, G)
    m = build_profile(st_.cs[0], 1.0, G, x_peak=st_.xs[0]).m
    assert abs(integrate(st_.v * m, G)) < 1e-10
    assert abs(integrate(st_.v * dm, G)) < 1e-10
    # parameters move by O(epsilon)
    assert abs(st_.cs[0] - 4.0) < 0.1 and abs(st_.xs[0]) < 0.1


def test_decompose_two_solitons():
    g = Grid(2048, 160.0)
    u = superposition([(3.0, -20.0), (5.0, 20.0)], g, 1.0)
    st_ = decompose(u, g, 1.0, [(3.1, -19.5), (4.9, 20.4)])
    assert np.allclose(st_.cs, [3.0, 5.0], atol=1e-6)
    assert np.allclose(st_.xs, [-20.0, 20.0], atol=1e-6)


@given(st.floats(min_value=-5, max_value=5))
def test_decompose_translation_equivariance(s):
    p = build_profile(4.0, 1.0, G)
    u = p.phi + 0.01 * random_perturbation(G, np.random.default_rng(4), 0.0)
    a = decompose(u, G, 1.0, [(4.0, 0.0)])
    b = decompose(translate(u, G, s), G, 1.0, [(4.0, s)])
    assert b.cs[0] == pytest.approx(a.cs[0], abs=1e-8)
    assert b.xs[0] == pytest.approx(a.xs[0] + s, abs=1e-7)


def test_decompose_rejections():
    p = build_profile(4.0, 1.0, G)
    with pytest.raises(InvalidParameter):
        decompose(p.phi, G, 1.0, [])
    with pytest.raises(InvalidParameter):
        decompose(p.phi, G, 1.0, [(3.0, 5.0), (4.0, 0.0)])
    with pytest.raises(InvalidParameter, match="invalid speed"):
        decompose(p.phi, G, 1.0, [(1.5, 0.0)])
    with pytest.raises((NumericalBreakdown, InvalidParameter)):
        decompose(np.zeros(G.n), G, 1.0, [(4.0, 0.0)], max_iter=5)


def test_track_exact_soliton():
    g = Grid(512, 80.0)
    p = build_profile(4.0, 1.0, g, x_peak=-10.0)
    tr = evolve(p.phi, g, 1.0, 0.01, 2.0, snapshot_stride=50)
    res = track(tr, 1.0, [(4.0, -10.0)])
    assert not res.exited
    assert np.max(np.abs(res.cs[:, 0] - 4.0)) < 1e-6
    assert np.max(np.abs(res.xs[:, 0] - (-10.0 + 4.0 * res.times))) < 1e-5
    assert np.max(res.vnorm) < 1e-5


def test_track_truncates_on_exit():
    g = Grid(512, 80.0)
    p = build_profile(4.0, 1.0, g)
    snaps = np.array([p.phi, np.zeros(g.n)])
    tr = Trajectory(g, 1.0, 0.1, np.array([0.0, 1.0]), snaps)
    res = track(tr, 1.0, [(4.0, 0.0)], max_iter=5)
    assert res.exited and len(res.times) == 1


def test_modulation_equations(run):
    _, res = run
    assert not res.exited
    assert res.ortho.max() < 1e-10
    r = res.ratios()
    assert r["cdot_over_v2"] < 1e3
    assert r["xdot_minus_c_over_v"] < 1e3


def test_peak_speed_close_to_modulated_speed(run):
    tr, res = run
    assert abs(peak_speed(tr) - res.cs.mean()) / res.cs.mean() < 0.02


def test_monotonicity(run):
    tr, res = run
    x = res.xs[:, 0]
    fs = functionals(tr, x, 10.0, 3.0, 0.1)
    assert monotonicity_slack(fs.E_R, 10.0, 3.0)["C"] < 1.0
    assert monotonicity_slack(fs.F_R, 10.0, 3.0)["C"] < 1.0
    assert monotonicity_slack(fs.E_L, 10.0, 3.0, increasing=True)["C"] < 1.0
    assert np.max(np.abs(fs.E_middle)) / fs.E_total[0] < 1e-12


def test_functionals_reject_small_K(run):
    tr, res = run
    with pytest.raises(InvalidParameter, match="K="):
        functionals(tr, res.xs[:, 0], 10.0, 1.0, 0.1)
    with pytest.raises(InvalidParameter):
        functionals(tr, res.xs[:, 0], -1.0, 3.0, 0.1)


def test_monotonicity_slack_values():
    assert monotonicity_slack([3, 2, 1], 1.0, 1.0)["violation"] == 0.0
    s = monotonicity_slack([3, 2, 2.5], 2.0, 1.0)
    assert s["violation"] == pytest.approx(0.5)
    assert s["C"] == pytest.approx(0.5 * np.exp(2.0))
    assert monotonicity_slack([1, 2, 3], 1.0, 1.0, increasing=True)["violation"] == 0.0


def test_right_tail_halves(run):
    tr, res = run
    tl = right_tail_decay(tr, res.xs[:, 0], res.states, offset=10.0)
    assert tl["v_right"][-1] / tl["v_right"][0] < 0.5
    half = res.times >= res.times[-1] / 2
    assert np.ptp(res.cs[half, 0]) / res.cs[-1, 0] < 1e-2


def test_localization_radius(run):
    tr, res = run
    R = localization_radius(tr, res.xs[:, 0], 1e-3)
    assert 0 < R < 60
    assert localization_radius(tr, res.xs[:, 0], 1e-1) <= R


def test_localization_radius_of_zero():
    g = Grid(256, 40.0)
    tr = Trajectory(g, 1.0, 0.1, np.array([0.0]), np.zeros((1, g.n)))
    assert localization_radius(tr, [0.0], 1e-6) == 0.0


def test_export_track_csv(run, tmp_path):
    tr, res = run
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        path = export_track_csv(res, tmp_path / "t.csv")
    header, data = read_csv(path)
    assert header == ["t", "c1", "x1", "vnorm", "ortho"]
    assert data.shape == (len(res.times), 5)
