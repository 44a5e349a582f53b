"""Spectral problem associated with a momentum density ``m``.

The eigenfunctions solve::

    psi'' = (1/4 + lambda (m + omega)) psi,   lambda(k) = -(k^2 + 1/4) / omega

so that ``psi'' = (-k^2 + lambda m) psi`` and the free solutions are
``exp(+-ikx)``.  Jost solutions are normalized by ``f+ ~ exp(ikx)`` as
``x -> +inf`` and ``f- ~ exp(-ikx)`` as ``x -> -inf``.

Integration uses the interaction picture ``psi = alpha e^{ikx} + beta e^{-ikx}``,
``psi' = ik (alpha e^{ikx} - beta e^{-ikx})``, in which the coefficients only
change where ``m`` is nonzero.  The Wronskians reduce to::

    W(f-, f+) / (2ik)        = alpha+ beta- - alpha- beta+       = a(k)
    -W(f-, conj f+) / (2ik)  = alpha- conj(alpha+) - beta- conj(beta+) = b(k)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameter, NumericalBreakdown
from .spectral import Grid, cumulative_integral, inner

__all__ = [
    "lambda_of_k",
    "JostSolution",
    "jost",
    "scattering_coeffs",
    "ScatteringData",
    "discrete_eigenvalues",
    "DiscreteSpectrum",
    "discrete_spectrum",
    "squared_eigenfunction",
    "eigenrelation_residual",
    "default_kgrid",
    "completeness_expansion",
    "completeness_residual",
    "export_scattering_csv",
]


def lambda_of_k(k, omega: float):
    """Spectral parameter ``lambda = -(k^2 + 1/4) / omega``."""
    if omega <= 0:
        raise InvalidParameter("omega must be positive")
    k = np.asarray(k)
    return -(k * k + 0.25) / omega


def _upsample(f, factor: int) -> np.ndarray:
    # trigonometric interpolation onto a grid `factor` times finer
    n = f.size
    fh = np.fft.rfft(f)
    N = n * factor
    pad = np.zeros(N // 2 + 1, dtype=complex)
    pad[: n // 2] = fh[: n // 2]
    pad[n // 2] = 0.5 * fh[n // 2]
    return np.fft.irfft(pad, n=N) * factor


def _refinement(grid: Grid, k) -> int:
    # interaction-picture RK4 is accurate once |2k| h_fine stays below ~0.03
    kabs = float(np.max(np.abs(k))) if np.size(k) else 0.0
    r = 2
    while 2 * max(kabs, 1.0) * grid.h / r > 0.03 and r < 128:
        r *= 2
    return r


@dataclass(frozen=True)
class JostSolution:
    """Values of a Jost solution and its derivative on the grid, one row per ``k``."""

    k: np.ndarray
    side: str
    x: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def f(self) -> np.ndarray:
        e = np.exp(1j * self.k[:, None] * self.x[None, :])
        return self.alpha * e + self.beta / e

    @property
    def df(self) -> np.ndarray:
        e = np.exp(1j * self.k[:, None] * self.x[None, :])
        return 1j * self.k[:, None] * (self.alpha * e - self.beta / e)


def jost(m, grid: Grid, omega: float, k, side: str = "+", refine: int | None = None) -> JostSolution:
    """Integrate the Jost solution for each ``k``, grouping values by the refinement they need.

    See :func:`_jost_group` for the method.
    """
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    if side not in ("+", "-"):
        raise InvalidParameter("side must be '+' or '-'")
    if np.any(k == 0):
        raise InvalidParameter("k = 0 is excluded: the Wronskian normalization 2ik vanishes")
    if refine is not None or k.size == 1:
        return _jost_group(m, grid, omega, k, side, refine)
    levels = np.array([_refinement(grid, kk) for kk in k])
    alpha = np.empty((k.size, grid.n), dtype=complex)
    beta = np.empty_like(alpha)
    for r in np.unique(levels):
        sel = levels == r
        part = _jost_group(m, grid, omega, k[sel], side, int(r))
        alpha[sel], beta[sel] = part.alpha, part.beta
    return JostSolution(k=k, side=side, x=np.asarray(grid.x), alpha=alpha, beta=beta)


def _jost_group(m, grid: Grid, omega: float, k, side: str = "+", refine: int | None = None) -> JostSolution:
    """Integrate the Jost solution ``f+`` (from the right end) or ``f-`` (from the left).

    ``k`` may be a scalar or an array of nonzero real or purely imaginary
    values; all are integrated simultaneously with RK4 on a grid ``refine``
    times finer than ``grid``, the potential being interpolated spectrally.
    """
    if side not in ("+", "-"):
        raise InvalidParameter("side must be '+' or '-'")
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    if np.any(k == 0):
        raise InvalidParameter("k = 0 is excluded: the Wronskian normalization 2ik vanishes")
    r = refine or _refinement(grid, k)
    if r % 2:
        r += 1
    mf = _upsample(np.asarray(m, dtype=float), r)
    mf = np.append(mf, mf[0])  # value at the right end x0 + L
    hf = grid.h / r
    xf = grid.x0 + hf * np.arange(mf.size)
    lam = lambda_of_k(k, omega)
    coef = lam / (2j * k)

    def rhs(j, a, b):
        # d/dx (alpha, beta) at fine index j
        e2 = np.exp(2j * k * xf[j])
        g = coef * mf[j]
        return g * (a + b / e2), -g * (a * e2 + b)

    nk = k.size
    out_a = np.empty((nk, grid.n), dtype=complex)
    out_b = np.empty((nk, grid.n), dtype=complex)
    H = 2 * hf
    last = mf.size - 1
    if side == "+":
        a = np.ones(nk, dtype=complex)
        b = np.zeros(nk, dtype=complex)
        idx = range(last, 0, -2)
        sgn = -1
    else:
        a = np.zeros(nk, dtype=complex)
        b = np.ones(nk, dtype=complex)
        idx = range(0, last, 2)
        sgn = 1
        out_a[:, 0], out_b[:, 0] = a, b
    for j in idx:
        d = sgn * H
        k1a, k1b = rhs(j, a, b)
        k2a, k2b = rhs(j + sgn, a + 0.5 * d * k1a, b + 0.5 * d * k1b)
        k3a, k3b = rhs(j + sgn, a + 0.5 * d * k2a, b + 0.5 * d * k2b)
        k4a, k4b = rhs(j + 2 * sgn, a + d * k3a, b + d * k3b)
        a = a + (d / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
        b = b + (d / 6.0) * (k1b + 2 * k2b + 2 * k3b + k4b)
        jn = j + 2 * sgn
        if jn % r == 0 and jn < last:
            out_a[:, jn // r], out_b[:, jn // r] = a, b
    if not (np.all(np.isfinite(out_a)) and np.all(np.isfinite(out_b))):
        raise NumericalBreakdown("Jost integration overflowed")
    return JostSolution(k=k, side=side, x=np.asarray(grid.x), alpha=out_a, beta=out_b)


@dataclass(frozen=True)
class ScatteringData:
    """Transmission ``a(k)`` and reflection ``b(k)`` coefficients."""

    k: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def unitarity_defect(self) -> np.ndarray:
        return np.abs(self.a) ** 2 - np.abs(self.b) ** 2 - 1.0


def _coeffs_from(fp: JostSolution, fm: JostSolution, j: int):
    ap, bp = fp.alpha[:, j], fp.beta[:, j]
    am, bm = fm.alpha[:, j], fm.beta[:, j]
    a = ap * bm - am * bp
    b = am * np.conj(ap) - bm * np.conj(bp)
    return a, b


def scattering_coeffs(m, grid: Grid, omega: float, k, refine: int | None = None) -> ScatteringData:
    """``a(k)`` and ``b(k)`` for real nonzero ``k``, evaluated at the box midpoint."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if np.any(k == 0):
        raise InvalidParameter("k = 0 is excluded from the scattering data")
    fp = jost(m, grid, omega, k, "+", refine)
    fm = jost(m, grid, omega, k, "-", refine)
    a, b = _coeffs_from(fp, fm, grid.n // 2)
    return ScatteringData(k=k, a=a, b=b)


def _a_imag(m, grid, omega, kappas, refine):
    # a(i kappa) is real for a real potential
    k = 1j * np.asarray(kappas, dtype=float)
    fp = jost(m, grid, omega, k, "+", refine)
    fm = jost(m, grid, omega, k, "-", refine)
    a, _ = _coeffs_from(fp, fm, grid.n // 2)
    return a.real


def discrete_eigenvalues(
    m,
    grid: Grid,
    omega: float,
    tol: float = 1e-8,
    scan: int = 200,
    refine: int = 8,
) -> np.ndarray:
    """Values ``kappa_n`` in ``(0, 1/2)`` where ``a(i kappa)`` changes sign.

    A uniform scan brackets the roots, which are then refined by
    simultaneous multisection (bisection evaluated at several interior points
    per pass) until the brackets are shorter than ``tol``.
    """
    edge = 1e-4
    kap = np.linspace(edge, 0.5 - edge, scan)
    vals = _a_imag(m, grid, omega, kap, refine)
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    lo, hi = kap[idx].copy(), kap[idx + 1].copy()
    flo = vals[idx].copy()
    sub = 8
    while lo.size and np.max(hi - lo) > tol:
        t = np.linspace(0, 1, sub + 1)[1:-1]
        pts = lo[:, None] + (hi - lo)[:, None] * t[None, :]
        fv = _a_imag(m, grid, omega, pts.ravel(), refine).reshape(pts.shape)
        for i in range(lo.size):
            s = np.sign(fv[i]) != np.sign(flo[i])
            j = int(np.argmax(s)) if np.any(s) else pts.shape[1]
            new_lo = pts[i, j - 1] if j > 0 else lo[i]
            new_hi = pts[i, j] if j < pts.shape[1] else hi[i]
            if j > 0:
                flo[i] = fv[i, j - 1]
            lo[i], hi[i] = new_lo, new_hi
    return np.sort(0.5 * (lo + hi))


@dataclass(frozen=True)
class DiscreteSpectrum:
    """Bound-state data: ``f- = b_n f+`` and ``adot_n = da/dk`` at ``k = i kappa_n``."""

    kappas: np.ndarray
    b_n: np.ndarray
    adot_n: np.ndarray

    def norming(self, sign: int = 1) -> np.ndarray:
        """Norming constants ``b_n^sign / (i adot_n)`` for ``sign`` in ``{+1, -1}``."""
        if sign not in (1, -1):
            raise InvalidParameter("sign must be +1 or -1")
        return self.b_n.astype(complex) ** sign / (1j * self.adot_n)


def discrete_spectrum(
    m,
    grid: Grid,
    omega: float,
    tol: float = 1e-8,
    scan: int = 200,
    refine: int = 8,
    dkappa: float = 1e-5,
) -> DiscreteSpectrum:
    """Eigenvalues together with the dependence constants and ``a'(i kappa_n)``.

    ``b_n`` is the ratio ``f-/f+`` where ``|f+|`` peaks.  Since
    ``a(i kappa)`` is real, ``i adot = d a(i kappa) / d kappa``, taken by a
    centered difference of step ``dkappa``.
    """
    kap = discrete_eigenvalues(m, grid, omega, tol, scan, refine)
    if kap.size == 0:
        empty = np.zeros(0)
        return DiscreteSpectrum(kappas=kap, b_n=empty, adot_n=empty.astype(complex))
    k = 1j * kap
    fp = jost(m, grid, omega, k, "+", refine).f
    fm = jost(m, grid, omega, k, "-", refine).f
    j = np.argmax(np.abs(fp), axis=1)
    rows = np.arange(kap.size)
    b = (fm[rows, j] / fp[rows, j]).real
    da = _a_imag(m, grid, omega, np.concatenate([kap + dkappa, kap - dkappa]), refine)
    slope = (da[: kap.size] - da[kap.size :]) / (2 * dkappa)
    return DiscreteSpectrum(kappas=kap, b_n=b, adot_n=-1j * slope)


def squared_eigenfunction(sol: JostSolution):
    """``F = f^2`` and ``F_x = 2 f f'`` for every ``k`` of a Jost solution."""
    f, df = sol.f, sol.df
    return f * f, 2 * f * df


def eigenrelation_residual(m, grid: Grid, omega: float, sol: JostSolution) -> np.ndarray:
    """Relative residual of ``K[m] F = -F / (2 lambda)`` for ``F = f^2``.

    With ``K = (1 - d^2)^{-1} (2 omega + m + d^{-1} m d)`` the relation is
    checked after applying ``1 - d^2``::

        (2 omega + m) F + d^{-1}(m F_x) + (F - F_xx) / (2 lambda) = 0

    ``F_xx`` comes from the ODE (``f'' = q f``), so no derivative of the
    non-periodic ``F`` is taken.  Returned per ``k``: sup of the residual
    over sup of ``F / (2 lambda)``.
    """
    m = np.asarray(m, dtype=float)
    lam = lambda_of_k(sol.k, omega)[:, None]
    f, df = sol.f, sol.df
    q = -(sol.k[:, None] ** 2) + lam * m[None, :]
    F = f * f
    Fx = 2 * f * df
    Fxx = 2 * df * df + 2 * q * F
    res = np.empty(sol.k.size)
    for i in range(sol.k.size):
        integ = cumulative_integral(m * Fx[i], grid)
        r = (2 * omega + m) * F[i] + integ + (F[i] - Fxx[i]) / (2 * lam[i])
        res[i] = np.max(np.abs(r)) / np.max(np.abs(F[i] / (2 * lam[i])))
    return res


def default_kgrid(count: int = 256, kmax: float = 8.0) -> np.ndarray:
    """Midpoint rule nodes on ``[-kmax, kmax]``; zero is never a node for even ``count``."""
    dk = 2 * kmax / count
    return -kmax + dk * (np.arange(count) + 0.5)


def completeness_expansion(profile, z, kgrid=None, refine: int | None = None, dc: float = 1e-4):
    """Expand ``z`` over the squared-eigenfunction basis of a soliton.

    Continuous part: ``z_c(x) = int F_x(x,k) P(k) dk`` with
    ``P(k) = <conj F(.,k), (1 - d^2) z> / (2 pi i k (1 + 4 k^2) |a(k)|^2)``,
    using ``F = (f+)^2``.  The normalization is the one fixed by the
    asymptotics ``F ~ exp(2ikx)`` and is exact for reflectionless potentials.

    Discrete part: ``z_d = phi' <g1, z> + d_c phi <g2, z>`` with
    ``g1 = -Z / (dH1/dc)``, ``g2 = m / (dH1/dc)`` where ``Z`` is the odd
    antiderivative of ``d_c m`` (mean of the two one-sided antiderivatives).

    ``z`` may be a single field or a stack of fields (one per row); the Jost
    solutions are computed once for all of them.  Returns
    ``(z_continuous, z_discrete)`` with the shape of ``z``.
    """
    from .soliton import closed_form_invariants, speed_derivative
    from .spectral import derivative

    grid = profile.grid
    omega = profile.omega
    k = default_kgrid() if kgrid is None else np.asarray(kgrid, dtype=float)
    z = np.asarray(z, dtype=float)
    Z2 = np.atleast_2d(z)
    lz = Z2 - derivative(Z2, grid, 2)
    fp = jost(profile.m, grid, omega, k, "+", refine)
    fm = jost(profile.m, grid, omega, k, "-", refine)
    a, _ = _coeffs_from(fp, fm, grid.n // 2)
    F, Fx = squared_eigenfunction(fp)
    proj = grid.h * lz @ np.conj(F).T
    P = proj / (2j * np.pi * k * (1 + 4 * k * k) * np.abs(a) ** 2)
    w = np.gradient(k) if k.size > 1 else np.ones(1)
    zc = np.real((w * P) @ Fx)
    dphi_c, dm_c = speed_derivative(profile.c, omega, grid, profile.x_peak, dc)
    G = cumulative_integral(dm_c, grid)
    Zodd = G - 0.5 * inner(dm_c, np.ones_like(dm_c), grid)
    dH1 = closed_form_invariants(profile.c, omega)["dH1_dc"]
    g1 = -Zodd / dH1
    g2 = profile.m / dH1
    zd = np.outer(grid.h * Z2 @ g1, profile.dphi) + np.outer(grid.h * Z2 @ g2, dphi_c)
    return zc.reshape(z.shape), zd.reshape(z.shape)


def completeness_residual(profile, z, kgrid=None, refine: int | None = None):
    """Relative L2 error of the squared-eigenfunction reconstruction of ``z`` (one value per row)."""
    zc, zd = completeness_expansion(profile, z, kgrid, refine)
    z = np.asarray(z, dtype=float)
    err = np.sqrt(np.sum((zc + zd - z) ** 2, axis=-1) / np.sum(z**2, axis=-1))
    return float(err) if err.ndim == 0 else err


def export_scattering_csv(data: ScatteringData, path, kappas=()) -> Path:
    """Write ``k, Re a, Im a, Re b, Im b`` rows followed by discrete ``kappa`` values."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "re_a", "im_a", "re_b", "im_b"])
        for kk, a, b in zip(data.k, data.a, data.b):
            w.writerow([f"{v:.17g}" for v in (kk, a.real, a.imag, b.real, b.imag)])
        for kap in kappas:
            w.writerow(["discrete_kappa", f"{kap:.17g}", "", "", ""])
    return path
