"""Smooth solitary waves of the Camassa-Holm equation with linear dispersion.

The travelling wave ``u = phi(x - c t)`` of speed ``c > 2 omega`` has no
elementary closed form in ``x`` but a simple parametric one::

    u     = (c - 2 omega) / (1 + (2 omega / c) sinh(theta)^2)
    x     = 2 theta / s + log(cosh(theta - theta0) / cosh(theta + theta0))
    s     = sqrt(1 - 2 omega / c),   theta0 = artanh(s)

The map ``theta -> x`` is increasing, so the profile on a grid is obtained
by inverting it pointwise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InvalidParameter, NumericalBreakdown
from .spectral import Grid, derivative, integrate

__all__ = [
    "SolitonProfile",
    "check_speed",
    "kappa_of_speed",
    "speed_of_kappa",
    "parametric_curve",
    "build_profile",
    "build_peakon",
    "stationary_residual",
    "first_integral_residual",
    "momentum_positivity",
    "momentum_closed_form",
    "closed_form_invariants",
    "numeric_invariants",
    "tail_decay_rate",
    "speed_derivative",
    "export_profile_csv",
]

THETA_MESH = 4096


def check_speed(c: float, omega: float) -> None:
    """Raise ``InvalidParameter`` unless ``omega > 0`` and ``c > 2 omega``."""
    if not (np.isfinite(c) and np.isfinite(omega)):
        raise InvalidParameter("invalid speed: non-finite parameters")
    if omega <= 0:
        raise InvalidParameter(f"invalid speed: omega={omega} must be positive")
    if c <= 2 * omega:
        raise InvalidParameter(f"invalid speed: c={c} must exceed 2*omega={2 * omega}")


def kappa_of_speed(c: float, omega: float) -> float:
    """Spectral parameter ``kappa = sqrt(1 - 2 omega / c) / 2`` in ``(0, 1/2)``."""
    check_speed(c, omega)
    return 0.5 * np.sqrt(1.0 - 2.0 * omega / c)


def speed_of_kappa(kappa: float, omega: float) -> float:
    """Inverse of :func:`kappa_of_speed`: ``c = 2 omega / (1 - 4 kappa^2)``."""
    if not 0 < kappa < 0.5:
        raise InvalidParameter(f"kappa={kappa} must lie in (0, 1/2)")
    return 2.0 * omega / (1.0 - 4.0 * kappa**2)


def _logcosh(z):
    a = np.abs(z)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def parametric_curve(theta, c: float, omega: float):
    """Return ``(x, u, dx/dtheta, du/dtheta)`` along the parametric soliton."""
    theta = np.asarray(theta, dtype=float)
    s = np.sqrt(1.0 - 2.0 * omega / c)
    th0 = np.arctanh(s)
    x = 2.0 * theta / s + _logcosh(theta - th0) - _logcosh(theta + th0)
    dx = 2.0 / s + np.tanh(theta - th0) - np.tanh(theta + th0)
    alpha = 2.0 * omega / c
    # 1 / (1 + alpha sinh^2) written with exp(-2|theta|) to avoid overflow
    e = np.exp(-2.0 * np.abs(theta))
    den = e + alpha * (1.0 - e) ** 2 / 4.0
    u = (c - 2 * omega) * e / den
    # du/dtheta = -(c - 2w) alpha sinh(2 theta) / (1 + alpha sinh^2)^2
    sinh2 = np.sign(theta) * (1.0 - e * e) / 2.0  # sinh(2 theta) * e
    du = -(c - 2 * omega) * alpha * sinh2 * e / den**2
    return x, u, dx, du


def _invert(xq, c, omega):
    """Solve ``x(theta) = xq`` by a PCHIP guess polished with Newton steps."""
    s = np.sqrt(1.0 - 2.0 * omega / c)
    th0 = np.arctanh(s)
    xabs = np.max(np.abs(xq)) if np.size(xq) else 0.0
    # theta range large enough that u has decayed to roundoff and the mesh
    # covers every query point
    th_tail = np.arcsinh(np.sqrt(c / (2 * omega) * 1e16))
    th_max = max(th_tail, 0.5 * s * (xabs + 2.0 * th0) + 2.0)
    theta = np.linspace(-th_max, th_max, THETA_MESH)
    X = parametric_curve(theta, c, omega)[0]
    guess = PchipInterpolator(X, theta)(np.clip(xq, X[0], X[-1]))
    t = guess
    for _ in range(60):
        x, _, dx, _ = parametric_curve(t, c, omega)
        step = (x - xq) / dx
        t = t - step
        if np.max(np.abs(step)) <= 1e-15 * max(1.0, th_max):
            break
    err = np.max(np.abs(parametric_curve(t, c, omega)[0] - xq))
    if not err <= 1e-10 * max(1.0, xabs):
        raise NumericalBreakdown(f"profile inversion failed (residual {err:.2e})")
    return t


def _profile_values(xq, c, omega):
    t = _invert(np.asarray(xq, dtype=float), c, omega)
    _, u, dx, du = parametric_curve(t, c, omega)
    return u, du / dx


@dataclass(frozen=True)
class SolitonProfile:
    """Sampled soliton with its derivative and momentum density ``m = phi - phi''``."""

    c: float
    omega: float
    grid: Grid
    x_peak: float
    phi: np.ndarray
    dphi: np.ndarray
    m: np.ndarray

    @property
    def kappa(self) -> float:
        return kappa_of_speed(self.c, self.omega)

    @property
    def decay_rate(self) -> float:
        return float(np.sqrt(1.0 - 2.0 * self.omega / self.c))

    def exact_derivative(self) -> np.ndarray:
        """``phi'`` from the parametric form (independent of the spectral one)."""
        L = self.grid.length
        total = np.zeros(self.grid.n)
        for shift in (-L, 0.0, L):
            total += _profile_values(self.grid.x - self.x_peak + shift, self.c, self.omega)[1]
        return total


def _readonly(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def build_profile(
    c: float,
    omega: float,
    grid: Grid | None = None,
    x_peak: float | None = None,
    tail_tol: float = 1e-6,
) -> SolitonProfile:
    """Sample the soliton of speed ``c`` on ``grid`` with crest at ``x_peak``.

    The profile is periodized by adding the two neighbouring images, which
    makes it smooth across the seam.  If the single wave is not below
    ``tail_tol * (c - 2 omega)`` half a period away from the crest the box
    is too small and ``InvalidParameter("grid too small")`` is raised.

    ``phi'`` and ``m`` are computed spectrally from the samples.
    """
    check_speed(c, omega)
    grid = Grid() if grid is None else grid
    x_peak = grid.center if x_peak is None else float(x_peak)
    amp = c - 2 * omega
    edge, _ = _profile_values(np.array([grid.length / 2]), c, omega)
    if edge[0] > tail_tol * amp:
        raise InvalidParameter(
            f"grid too small: profile is {edge[0] / amp:.1e} of its peak at the box edge"
        )
    L = grid.length
    d = grid.periodic_offset(grid.x, x_peak)
    phi = np.zeros(grid.n)
    for shift in (-L, 0.0, L):
        phi += _profile_values(d + shift, c, omega)[0]
    dphi = derivative(phi, grid)
    m = phi - derivative(phi, grid, 2)
    return SolitonProfile(c, omega, grid, x_peak, _readonly(phi), _readonly(dphi), _readonly(m))


def build_peakon(c: float, grid: Grid | None = None, x_peak: float | None = None) -> np.ndarray:
    """Periodic peakon: the sum over images of ``c exp(-|x - x_peak|)``."""
    if not c > 0:
        raise InvalidParameter("invalid speed: peakon speed must be positive")
    grid = Grid() if grid is None else grid
    x_peak = grid.center if x_peak is None else float(x_peak)
    L = grid.length
    d = np.abs(grid.periodic_offset(grid.x, x_peak))
    return c * np.cosh(L / 2 - d) / np.sinh(L / 2)


def stationary_residual(p: SolitonProfile) -> float:
    """Sup-norm of ``-c phi + c phi'' + 3/2 phi^2 + 2 omega phi - phi phi'' - phi'^2 / 2``."""
    c, w = p.c, p.omega
    phi, d1 = p.phi, p.dphi
    d2 = derivative(phi, p.grid, 2)
    r = -c * phi + c * d2 + 1.5 * phi**2 + 2 * w * phi - phi * d2 - 0.5 * d1**2
    return float(np.max(np.abs(r)))


def first_integral_residual(p: SolitonProfile) -> float:
    """Sup-norm of ``phi'^2 (c - phi) - phi^2 (c - 2 omega - phi)``."""
    c, w = p.c, p.omega
    r = p.dphi**2 * (c - p.phi) - p.phi**2 * (c - 2 * w - p.phi)
    return float(np.max(np.abs(r)))


def momentum_positivity(p: SolitonProfile, floor: float = 1e-10) -> float:
    """Minimum of ``m`` over the resolved part of the wave.

    Points where ``phi < floor * (c - 2 omega)`` are excluded: there ``m`` is
    below the roundoff level of a second spectral derivative and its sign
    carries no information.
    """
    mask = p.phi >= floor * (p.c - 2 * p.omega)
    return float(np.min(p.m[mask]))


def momentum_closed_form(p: SolitonProfile) -> np.ndarray:
    """``m`` expressed through ``phi``: ``omega phi (2c - phi) / (c - phi)^2``."""
    c, w, phi = p.c, p.omega, p.phi
    return w * phi * (2 * c - phi) / (c - phi) ** 2


def closed_form_invariants(c: float, omega: float) -> dict:
    """Energy ``H1``, Hamiltonian ``H2`` of the soliton and their speed derivatives.

    Returns a dict with keys ``kappa``, ``H1``, ``H2``, ``dH1_dc``, ``dH2_dc``.
    """
    k = kappa_of_speed(c, omega)
    lg = np.log((1 - 2 * k) / (1 + 2 * k))
    q = 1 - 4 * k * k
    H1 = omega**2 * (lg + 4 * k * (1 + 4 * k * k) / q**2)
    H2 = omega**3 * (lg + 4 * k * (3 + 32 * k**2 - 48 * k**4) / (3 * q**3))
    return {
        "kappa": k,
        "H1": H1,
        "H2": H2,
        "dH1_dc": 4 * k * c,
        "dH2_dc": 4 * k * c * c,
    }


def numeric_invariants(p: SolitonProfile) -> dict:
    """Quadratures of the conserved quantities of the sampled profile.

    Returns ``E = 1/2 int(phi^2 + phi'^2)``,
    ``F = 1/2 int(phi^3 + phi phi'^2 + 2 omega phi^2)``,
    ``H0 = int (sqrt(m + omega) - sqrt(omega))^2``, the Casimir
    ``Lambda = int (sqrt((m + omega) / omega) - 1)`` and the mass ``int phi``.
    ``m + omega <= 0`` anywhere raises ``InvalidParameter``.
    """
    phi, d1, g, w = p.phi, p.dphi, p.grid, p.omega
    arg = p.m + w
    if not np.all(arg > 0):
        raise InvalidParameter("domain error: m + omega must be positive")
    E = 0.5 * integrate(phi**2 + d1**2, g)
    F = 0.5 * integrate(phi**3 + phi * d1**2 + 2 * w * phi**2, g)
    H0 = integrate((np.sqrt(arg) - np.sqrt(w)) ** 2, g)
    lam = integrate(np.sqrt(arg / w) - 1.0, g)
    return {"E": float(E), "F": float(F), "H0": float(H0), "Casimir": float(lam),
            "mass": float(integrate(phi, g))}


def tail_decay_rate(p: SolitonProfile, window: tuple[float, float] = (8.0, 20.0)) -> float:
    """Least-squares exponential rate of the right tail over ``window`` (distances from the crest)."""
    d = p.grid.periodic_offset(p.grid.x, p.x_peak)
    sel = (d >= window[0]) & (d <= window[1]) & (p.phi > 0)
    if sel.sum() < 4:
        raise InvalidParameter("tail window contains too few resolved points")
    slope = np.polyfit(d[sel], np.log(p.phi[sel]), 1)[0]
    return float(-slope)


def speed_derivative(c: float, omega: float, grid: Grid, x_peak: float | None = None, dc: float = 1e-4):
    """Centred difference ``(phi_{c+dc} - phi_{c-dc}) / (2 dc)`` and its momentum."""
    plus = build_profile(c + dc, omega, grid, x_peak)
    minus = build_profile(c - dc, omega, grid, x_peak)
    dphi = (plus.phi - minus.phi) / (2 * dc)
    dm = (plus.m - minus.m) / (2 * dc)
    return dphi, dm


def export_profile_csv(p: SolitonProfile, path) -> Path:
    """Write columns ``x, phi, dphi, m`` with 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "phi", "dphi", "m"])
        for row in zip(p.grid.x, p.phi, p.dphi, p.m):
            w.writerow([f"{v:.17g}" for v in row])
    return path
