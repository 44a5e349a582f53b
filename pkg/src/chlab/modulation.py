"""Modulation of near-soliton states and localized monotonicity functionals.

A state close to a sum of solitons is written as::

    u = sum_j phi_{c_j}(x - x_j) + v,   <v, m_j> = <v, m_j'> = 0,

where ``m_j = (1 - d^2/dx^2) phi_{c_j}(x - x_j)``.  The parameters are
found by Newton iteration on the ``2N`` orthogonality conditions.

The monotonicity functionals weight the energy densities with the smooth
step ``Psi_K(x) = Psi_1(x / K)``, where ``Psi_1 = int_{-inf}^x g`` and
``g = bump * exp(-|x|)`` is the convolution of an even bump of mass 1/2
with the two-sided exponential.  ``Psi_K`` increases from 0 to 1, satisfies
``Psi_K(x) + Psi_K(-x) = 1`` and has exact exponential tails of rate
``1 / K``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .errors import InvalidParameter, NumericalBreakdown
from .soliton import build_profile
from .spectral import Grid, derivative, h1_norm, integrate

__all__ = [
    "bump",
    "psi_one",
    "PsiWeight",
    "psi_weight",
    "ModulationState",
    "decompose",
    "TrackResult",
    "track",
    "FunctionalSeries",
    "functionals",
    "monotonicity_slack",
    "localization_radius",
    "right_tail_decay",
    "export_track_csv",
]

_GL_NODES = 128


_GL_FINE = 256


@lru_cache(maxsize=1)
def _bump_norm() -> float:
    t, w = np.polynomial.legendre.leggauss(_GL_FINE)
    return float(np.sum(w * np.exp(-1.0 / (1.0 - t * t))))


def bump(y) -> np.ndarray:
    """Even bump ``exp(-1/(1 - y^2))`` on ``(-1, 1)`` scaled to total mass 1/2."""
    y = np.asarray(y, dtype=float)
    inside = np.abs(y) < 1
    out = np.zeros_like(y)
    yi = y[inside]
    out[inside] = np.exp(-1.0 / (1.0 - yi * yi)) / (2 * _bump_norm())
    return out


@lru_cache(maxsize=1)
def _bump_moment() -> float:
    # int bump(y) exp(y) dy = int bump(y) exp(-y) dy by evenness
    t, w = np.polynomial.legendre.leggauss(_GL_FINE)
    return float(np.sum(w * bump(t) * np.exp(t)))


def _gl_integral(f, a, b):
    # Gauss-Legendre on [a_i, b_i] for arrays of endpoints; f maps nodes (rows) to values
    t, w = np.polynomial.legendre.leggauss(_GL_NODES)
    half = 0.5 * (b - a)
    y = 0.5 * (a + b)[:, None] + half[:, None] * t[None, :]
    return half * np.sum(w[None, :] * f(y), axis=1)


def psi_one(z) -> np.ndarray:
    """``Psi_1(z) = int bump(y) E(z - y) dy`` with ``E(s) = int_{-inf}^s exp(-|t|) dt``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    M = _bump_moment()
    left = z <= -1
    right = z >= 1
    mid = ~(left | right)
    out[left] = np.exp(z[left]) * M
    out[right] = 1.0 - np.exp(-z[right]) * M
    if np.any(mid):
        zm = z[mid]
        lo = np.full_like(zm, -1.0)
        hi = np.full_like(zm, 1.0)
        below = _gl_integral(lambda y: bump(y) * (2.0 - np.exp(-(zm[:, None] - y))), lo, zm)
        above = _gl_integral(lambda y: bump(y) * np.exp(zm[:, None] - y), zm, hi)
        out[mid] = below + above
    return out


@dataclass(frozen=True)
class PsiWeight:
    """Sampled ``Psi_K(x - center)`` on a grid."""

    K: float
    center: float
    field: np.ndarray


def psi_weight(grid: Grid, K: float, center: float = 0.0) -> PsiWeight:
    """``Psi_K(x - center)`` sampled at the grid points (not periodized)."""
    if K < 1:
        raise InvalidParameter("Psi_K needs K >= 1")
    f = psi_one((grid.x - center) / K)
    f.flags.writeable = False
    return PsiWeight(float(K), float(center), f)


@dataclass(frozen=True)
class ModulationState:
    """Modulation parameters and residual of one snapshot."""

    cs: np.ndarray
    xs: np.ndarray
    v: np.ndarray
    ortho_residual: float
    iterations: int


def _solitons(cs, xs, grid, omega):
    total = np.zeros(grid.n)
    ms = []
    for c, x in zip(cs, xs):
        p = build_profile(c, omega, grid, x_peak=x)
        total += p.phi
        ms.append(p.m)
    return total, ms


def _ortho(u, cs, xs, grid, omega):
    total, ms = _solitons(cs, xs, grid, omega)
    v = u - total
    res = []
    for m in ms:
        res.append(integrate(v * m, grid))
        res.append(integrate(v * derivative(m, grid), grid))
    return np.array(res), v


def decompose(
    u,
    grid: Grid,
    omega: float,
    guesses,
    tol: float = 1e-10,
    max_iter: int = 50,
    fd_step: float = 1e-6,
) -> ModulationState:
    """Find ``(c_j, x_j)`` making ``v = u - sum_j phi_{c_j}(. - x_j)`` orthogonal to ``m_j, m_j'``.

    ``guesses`` is a list of ``(c_j, x_j)`` ordered by position.  Newton
    iteration with a forward-difference Jacobian (step ``fd_step``) runs until
    all residuals are below ``tol`` in absolute value.  Failure to converge
    raises ``NumericalBreakdown("outside modulation tube")``; a speed at or
    below ``2 omega`` raises ``InvalidParameter``.
    """
    u = np.asarray(u, dtype=float)
    guesses = [tuple(map(float, gss)) for gss in guesses]
    if not guesses:
        raise InvalidParameter("at least one soliton guess is required")
    xs0 = [gss[1] for gss in guesses]
    if any(b <= a for a, b in zip(xs0, xs0[1:])):
        raise InvalidParameter("guesses must be ordered by increasing position")
    N = len(guesses)
    theta = np.array([gss[0] for gss in guesses] + xs0)

    def check(th):
        if np.any(th[:N] <= 2 * omega):
            raise InvalidParameter("invalid speed: modulation speed fell to c <= 2*omega")

    check(theta)
    F, v = _ortho(u, theta[:N], theta[N:], grid, omega)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(F)) < tol:
            return ModulationState(theta[:N].copy(), theta[N:].copy(), v, float(np.max(np.abs(F))), it - 1)
        Jac = np.empty((2 * N, 2 * N))
        for j in range(2 * N):
            th = theta.copy()
            th[j] += fd_step
            check(th)
            Jac[:, j] = (_ortho(u, th[:N], th[N:], grid, omega)[0] - F) / fd_step
        try:
            step = np.linalg.solve(Jac, -F)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("outside modulation tube: singular Jacobian") from exc
        if not np.all(np.isfinite(step)):
            raise NumericalBreakdown("outside modulation tube: non-finite Newton step")
        theta = theta + step
        check(theta)
        F, v = _ortho(u, theta[:N], theta[N:], grid, omega)
    if np.max(np.abs(F)) < tol:
        return ModulationState(theta[:N].copy(), theta[N:].copy(), v, float(np.max(np.abs(F))), max_iter)
    raise NumericalBreakdown(f"outside modulation tube: Newton did not converge in {max_iter} iterations")


@dataclass
class TrackResult:
    """Modulation parameters along a trajectory."""

    times: np.ndarray
    cs: np.ndarray
    xs: np.ndarray
    vnorm: np.ndarray
    ortho: np.ndarray
    states: list = field(default_factory=list, repr=False)
    exited: bool = False
    message: str = ""

    @property
    def cdot(self) -> np.ndarray:
        return np.gradient(self.cs, self.times, axis=0)

    @property
    def xdot(self) -> np.ndarray:
        return np.gradient(self.xs, self.times, axis=0)

    def ratios(self) -> dict:
        """``max |c'| / ||v||^2`` and ``max |x' - c| / ||v||`` over the series."""
        v = self.vnorm[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            rc = np.abs(self.cdot) / v**2
            rx = np.abs(self.xdot - self.cs) / v
        return {"cdot_over_v2": float(np.nanmax(rc)), "xdot_minus_c_over_v": float(np.nanmax(rx))}


def track(traj: Trajectory, omega: float, init_guesses, **kwargs) -> TrackResult:
    """Decompose every snapshot, warm-starting from the previous one.

    The position guess is advanced by ``c * dt`` between snapshots.  If the
    decomposition fails the series is truncated and ``exited`` is set.
    """
    g = traj.grid
    guesses = [tuple(map(float, gss)) for gss in init_guesses]
    times, states = [], []
    exited, msg = False, ""
    t_prev = traj.times[0]
    for t, u in zip(traj.times, traj.snapshots):
        dt = t - t_prev
        guess = [(c, x + c * dt) for c, x in guesses]
        try:
            st = decompose(u, g, omega, guess, **kwargs)
        except (NumericalBreakdown, InvalidParameter) as exc:
            exited, msg = True, f"t={t:.4g}: {exc}"
            break
        states.append(st)
        times.append(t)
        guesses = list(zip(st.cs, st.xs))
        t_prev = t
    if not states:
        raise NumericalBreakdown(f"outside modulation tube at the first snapshot ({msg})")
    return TrackResult(
        times=np.array(times),
        cs=np.array([s.cs for s in states]),
        xs=np.array([s.xs for s in states]),
        vnorm=np.array([h1_norm(s.v, g) for s in states]),
        ortho=np.array([s.ortho_residual for s in states]),
        states=states,
        exited=exited,
        message=msg,
    )


@dataclass(frozen=True)
class FunctionalSeries:
    """Weighted energy functionals per snapshot."""

    times: np.ndarray
    E_R: np.ndarray
    E_L: np.ndarray
    F_R: np.ndarray
    E_total: np.ndarray
    E_x0t0: np.ndarray
    F_x0t0: np.ndarray
    params: dict

    @property
    def E_middle(self) -> np.ndarray:
        """Bookkeeping remainder ``E - E_R - E_L`` (zero up to rounding)."""
        return self.E_total - self.E_R - self.E_L


def _k_bound(alpha, c1, omega):
    s = (1 - alpha) ** 2 * c1
    if s <= 2 * omega:
        return np.inf
    return float(np.sqrt(s / (s - 2 * omega)))


def functionals(
    traj: Trajectory,
    x_of_t,
    x0: float,
    K: float,
    alpha: float = 0.1,
    c1: float | None = None,
    t0_index: int = 0,
) -> FunctionalSeries:
    """``E_R, E_L, F_R`` and the frozen-frame ``E_{x0,t0}, F_{x0,t0}`` per snapshot.

    With energy density ``e = (u^2 + u_x^2) / 2`` and Hamiltonian density
    ``f = (u^3 + u u_x^2 + 2 omega u^2) / 2``::

        E_R = int e Psi_K(x - x(t) + x0),   E_L = int e (1 - Psi_K(...))
        F_R = int f Psi_K(x - x(t) + x0)
        E_{x0,t0} = int e Psi_K(x - x(t) + x0 - alpha (x(t0) - x(t)))

    and likewise ``F_{x0,t0}``.  ``K`` must exceed
    ``sqrt((1-alpha)^2 c1 / ((1-alpha)^2 c1 - 2 omega))``; ``c1`` defaults to
    the mean speed of ``x_of_t``.
    """
    g = traj.grid
    omega = traj.omega
    x_of_t = np.asarray(x_of_t, dtype=float)
    if x_of_t.shape != traj.times.shape:
        raise InvalidParameter("x_of_t must have one entry per snapshot")
    if not 0 < alpha < 1:
        raise InvalidParameter("alpha must lie in (0, 1)")
    if c1 is None:
        c1 = float(np.polyfit(traj.times, x_of_t, 1)[0]) if len(x_of_t) > 1 else 2 * omega + 1
    bound = _k_bound(alpha, c1, omega)
    if not K > bound:
        raise InvalidParameter(
            f"K={K} violates K > sqrt((1-alpha)^2 c1 / ((1-alpha)^2 c1 - 2 omega)) = {bound:.6g}"
        )
    if not x0 > 0:
        raise InvalidParameter("x0 must be positive")
    ER, EL, FR, ET, Ex, Fx = [], [], [], [], [], []
    xt0 = x_of_t[t0_index]
    for u, xt in zip(traj.snapshots, x_of_t):
        ux = derivative(u, g)
        e = 0.5 * (u * u + ux * ux)
        f = 0.5 * (u**3 + u * ux * ux + 2 * omega * u * u)
        w = psi_one((g.x - xt + x0) / K)
        wf = psi_one((g.x - xt + x0 - alpha * (xt0 - xt)) / K)
        ER.append(integrate(e * w, g))
        EL.append(integrate(e * (1 - w), g))
        FR.append(integrate(f * w, g))
        ET.append(integrate(e, g))
        Ex.append(integrate(e * wf, g))
        Fx.append(integrate(f * wf, g))
    arr = lambda a: np.array(a, dtype=float)  # noqa: E731
    return FunctionalSeries(
        times=traj.times.copy(),
        E_R=arr(ER),
        E_L=arr(EL),
        F_R=arr(FR),
        E_total=arr(ET),
        E_x0t0=arr(Ex),
        F_x0t0=arr(Fx),
        params={"x0": x0, "K": K, "alpha": alpha, "c1": c1, "t0_index": t0_index, "K_bound": bound},
    )


def monotonicity_slack(values, x0: float, K: float, increasing: bool = False) -> dict:
    """Smallest ``C`` with ``Q(t) <= Q(t') + C exp(-x0/K)`` for all ``t' <= t``.

    With ``increasing=True`` the reverse inequality ``Q(t) >= Q(t') - C exp(-x0/K)``
    is measured instead.  Returns the worst violation and ``C``.
    """
    q = np.asarray(values, dtype=float)
    if increasing:
        q = -q
    run_min = np.minimum.accumulate(q)
    worst = float(max(0.0, np.max(q - run_min)))
    return {"violation": worst, "C": worst * float(np.exp(x0 / K))}


def _tail_mass(u, grid, center, R):
    ux = derivative(u, grid)
    d = grid.x - center
    sel = np.abs(d) > R
    return float(grid.h * np.sum((u * u + ux * ux)[sel]))


def localization_radius(traj: Trajectory, x_of_t, eps: float) -> float:
    """Smallest ``R`` with ``int_{|x - x(t)| > R} (u^2 + u_x^2) < eps`` at every snapshot.

    Evaluated on the grid-point radii; 0 is returned when even the full
    energy integral is below ``eps``.
    """
    g = traj.grid
    x_of_t = np.asarray(x_of_t, dtype=float)
    best = 0.0
    for u, xt in zip(traj.snapshots, x_of_t):
        ux = derivative(u, g)
        dens = (u * u + ux * ux) * g.h
        d = np.abs(g.x - xt)
        order = np.argsort(d)[::-1]
        # tail(R) = sum over |d| > R; cumulative sum from the far end
        tail = np.cumsum(dens[order])
        radii = d[order]
        ok = tail < eps
        if ok.all():
            continue
        # first far-to-near index where the tail reaches eps
        j = int(np.argmax(~ok))
        best = max(best, float(radii[j]))
    return best


def right_tail_decay(traj: Trajectory, x_of_t, states=None, offset: float = 10.0, origin: float | None = None) -> dict:
    """Tail norms per snapshot.

    ``u_right``: ``||u||_{H^1(x > origin + 2 omega t)}`` with ``origin``
    defaulting to ``x(0) - offset``;
    ``v_right``: ``||v||_{H^1(x > x(t) - offset)}`` when modulation states are given;
    ``dev_right``: ``||u - phi_{c(t)}(. - x(t))||_{H^1(x > origin + 2 omega t)}``.
    """
    g = traj.grid
    x_of_t = np.asarray(x_of_t, dtype=float)
    origin = x_of_t[0] - offset if origin is None else float(origin)
    out = {"times": traj.times.copy(), "u_right": [], "v_right": [], "dev_right": []}
    for i, (t, u) in enumerate(zip(traj.times, traj.snapshots)):
        lo = origin + 2 * traj.omega * (t - traj.times[0])
        out["u_right"].append(_h1_restricted(u, g, g.x > lo))
        if states is not None:
            v = states[i].v
            out["v_right"].append(_h1_restricted(v, g, g.x > x_of_t[i] - offset))
            out["dev_right"].append(_h1_restricted(v, g, g.x > lo))
    return {k: np.array(v) for k, v in out.items()}


def _h1_restricted(f, grid, sel):
    fx = derivative(f, grid)
    return float(np.sqrt(grid.h * np.sum((f * f + fx * fx)[sel])))


def export_track_csv(result: TrackResult, path, series: FunctionalSeries | None = None, tails: dict | None = None) -> Path:
    """CSV with ``t, c_j, x_j, vnorm`` and, when given, ``E_R, E_L, F_R`` and tail norms."""
    path = Path(path)
    N = result.cs.shape[1]
    header = ["t"] + [f"c{j + 1}" for j in range(N)] + [f"x{j + 1}" for j in range(N)] + ["vnorm", "ortho"]
    if series is not None:
        header += ["E_R", "E_L", "F_R"]
    if tails is not None:
        header += ["u_right", "v_right"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(result.times):
            row = [t, *result.cs[i], *result.xs[i], result.vnorm[i], result.ortho[i]]
            if series is not None:
                row += [series.E_R[i], series.E_L[i], series.F_R[i]]
            if tails is not None:
                row += [tails["u_right"][i], tails["v_right"][i] if len(tails["v_right"]) else np.nan]
            w.writerow([f"{float(v):.17g}" for v in row])
    return path
