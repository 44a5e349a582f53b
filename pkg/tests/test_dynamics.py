import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chlab.dynamics import (
    Trajectory,
    ch_rhs,
    ch_rhs_alternative,
    conserved_quantities,
    evolve,
    export_trajectory,
    peak_position,
    peak_speed,
    shift_minimized_error,
)
from chlab.errors import InvalidParameter, NumericalBreakdown
from chlab.soliton import build_profile
from chlab.spectral import Grid, translate

from conftest import band_limited

G = Grid(512, 80.0)


def test_rhs_of_zero():
    assert np.max(np.abs(ch_rhs(np.zeros(G.n), G, 1.0))) == 0.0


def test_soliton_is_travelling_wave(prof4):
    r = ch_rhs(prof4.phi, prof4.grid, 1.0)
    assert np.max(np.abs(r + 4.0 * prof4.dphi)) < 1e-6


@given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(min_value=0.1, max_value=2.0))
def test_two_forms_of_the_vector_field_agree(seed, omega):
    u = 0.5 * band_limited(G, np.random.default_rng(seed), kmax=2.0)
    a = ch_rhs(u, G, omega, dealias=False)
    b = ch_rhs_alternative(u, G, omega)
    assert np.max(np.abs(a - b)) < 1e-10


def test_zero_data_stays_zero():
    tr = evolve(np.zeros(G.n), G, 1.0, 0.01, 0.5, snapshot_stride=10)
    assert np.all(tr.snapshots == 0.0)
    assert np.all(np.diff(tr.times) > 0)


def test_soliton_speed_and_invariants():
    p = build_profile(4.0, 1.0, G)
    tr = evolve(p.phi, G, 1.0, 0.005, 2.0, snapshot_stride=40)
    assert abs(peak_speed(tr) - 4.0) / 4.0 < 1e-3
    assert tr.relative_drift("E") < 1e-8
    assert tr.relative_drift("F") < 1e-8
    err, s = shift_minimized_error(tr.final, p.phi, G)
    assert err < 1e-4
    assert s == pytest.approx(8.0, abs=1e-3)


def test_identical_snapshots_have_zero_speed(prof4):
    snaps = np.array([prof4.phi, prof4.phi, prof4.phi])
    tr = Trajectory(prof4.grid, 1.0, 0.1, np.array([0.0, 1.0, 2.0]), snaps)
    assert abs(peak_speed(tr)) < 1e-12


def test_peak_position_is_subgrid(prof4):
    g = prof4.grid
    shifted = translate(prof4.phi, g, 0.3 * g.h)
    assert peak_position(shifted, g) == pytest.approx(prof4.x_peak + 0.3 * g.h, abs=1e-8)


def test_time_reversal_symmetry():
    # u(t, x) -> u(-t, -x) maps solutions to solutions
    p = build_profile(3.0, 1.0, G)
    u0 = p.phi + 0.05 * band_limited(G, np.random.default_rng(3), kmax=1.0, width=6.0)
    T, dt = 2.0, 0.005
    flip = lambda f: np.roll(f[::-1], 1)  # noqa: E731  x -> -x on the centred grid
    u1 = evolve(u0, G, 1.0, dt, T, snapshot_stride=10**6).final
    back = evolve(flip(u1), G, 1.0, dt, T, snapshot_stride=10**6).final
    assert np.max(np.abs(flip(back) - u0)) < 1e-6


def test_conserved_quantities_of_soliton(prof4):
    q = conserved_quantities(prof4.phi, prof4.grid, 1.0)
    assert q["Lambda"] > 0
    bad = conserved_quantities(-5 * prof4.phi, prof4.grid, 1.0)
    assert np.isnan(bad["Lambda"])


def test_guards():
    p = build_profile(4.0, 1.0, G)
    with pytest.raises(NumericalBreakdown, match="CFL"):
        evolve(p.phi, G, 1.0, 1.0, 2.0)
    with pytest.raises(NumericalBreakdown, match="grew"):
        evolve(p.phi, G, 1.0, 0.01, 0.1, growth_max=0.5)
    with pytest.raises(InvalidParameter):
        evolve(p.phi, G, 1.0, -0.1, 1.0)
    with pytest.raises(InvalidParameter):
        evolve(p.phi, G, 1.0, 0.3, 1.0)
    with pytest.raises(InvalidParameter):
        evolve(p.phi[:-1], G, 1.0, 0.1, 1.0)


def test_rk4_order():
    p = build_profile(4.0, 1.0, G)
    ref = build_profile(4.0, 1.0, G, x_peak=G.center + 4.0 * 1.8)
    errs = [shift_minimized_error(evolve(p.phi, G, 1.0, dt, 1.8, snapshot_stride=10**6).final, ref.phi, G)[0]
            for dt in (0.03, 0.015)]
    assert errs[0] / errs[1] >= 10


def test_export_trajectory(tmp_path):
    p = build_profile(4.0, 1.0, G)
    tr = evolve(p.phi, G, 1.0, 0.01, 0.1, snapshot_stride=5)
    idx = export_trajectory(tr, tmp_path)
    meta = json.loads(idx.read_text())
    assert len(meta["snapshots"]) == len(tr.times) == 3
    assert (tmp_path / meta["snapshots"][-1]["file"]).is_file()
