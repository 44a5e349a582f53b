"""Dense discretizations of the linearized Camassa-Holm operators.

All operators act on sample vectors of a :class:`~chlab.spectral.Grid`.
Differential parts are Fourier multipliers, so the matrices are exact on
band-limited periodic data.  The nonlocal integral ``d^{-1}`` is the
cumulative integral from the left end of the box
(:func:`~chlab.spectral.cumulative_integral_matrix`), whose transpose is the
integral to the right end.

Notation
--------
``L1 = -d/dx((c - phi) d/dx) - 3 phi + phi'' + (c - 2 omega)``
    Hessian of ``c E - F`` at the soliton.
``J = -d/dx (1 - d^2/dx^2)^{-1}``
    Hamiltonian operator.
``R = (2 omega + m + d^{-1} m d/dx)(1 - d^2/dx^2)^{-1}``
    Recursion operator at the soliton, ``Rstar`` its adjoint and
    ``K = (1 - d^2/dx^2)^{-1}(2 omega + m + d^{-1} m d/dx)``.
``L_n = R^{n-1} L1``
    Higher Hessians.
``L_a = exp(a x) J L1 exp(-a x)``
    Weighted linearization, built by replacing ``d/dx`` with ``d/dx - a``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import InvalidParameter, NumericalBreakdown
from .soliton import SolitonProfile, check_speed, speed_derivative
from .spectral import (
    Grid,
    WeightParam,
    cumulative_integral,
    cumulative_integral_matrix,
    derivative_symbol,
    h1_norm,
    integrate,
    multiplier_matrix,
)

__all__ = [
    "DiscretizedOperator",
    "SpectrumReport",
    "ProjectionPair",
    "build_L1",
    "build_J",
    "build_recursion",
    "build_Ln",
    "localized_basis",
    "resolved_subspace",
    "commutator_residuals",
    "symbol_curve",
    "weight_bounds",
    "lambda_weighted",
    "build_weighted_JL1",
    "essential_curve_weighted",
    "spectral_projections",
    "eigen_spectrum",
    "discrete_essential_spectrum",
    "hausdorff_distance",
    "near_zero_subspace",
    "liouville_transform_potential",
    "semigroup_decay_rate",
    "export_spectrum",
]


@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    """Dense matrix acting on the samples of ``grid``."""

    matrix: np.ndarray
    label: str
    grid: Grid

    def __post_init__(self):
        n = self.grid.n
        if self.matrix.shape != (n, n):
            raise InvalidParameter(f"operator {self.label!r} has shape {self.matrix.shape}, grid has n={n}")

    def _check(self, other: "DiscretizedOperator"):
        if other.grid != self.grid:
            raise InvalidParameter(f"operators {self.label!r} and {other.label!r} live on different grids")

    def __matmul__(self, other):
        if isinstance(other, DiscretizedOperator):
            self._check(other)
            return DiscretizedOperator(self.matrix @ other.matrix, f"{self.label} {other.label}", self.grid)
        return self.matrix @ np.asarray(other)

    def __add__(self, other: "DiscretizedOperator"):
        self._check(other)
        return DiscretizedOperator(self.matrix + other.matrix, f"({self.label} + {other.label})", self.grid)

    def __sub__(self, other: "DiscretizedOperator"):
        self._check(other)
        return DiscretizedOperator(self.matrix - other.matrix, f"({self.label} - {other.label})", self.grid)

    def __call__(self, f) -> np.ndarray:
        return self.matrix @ np.asarray(f)

    @property
    def T(self) -> "DiscretizedOperator":
        """Adjoint for the trapezoid pairing (transpose, conjugated if complex)."""
        return DiscretizedOperator(self.matrix.conj().T, f"{self.label}*", self.grid)

    def symmetry_defect(self) -> float:
        """``||A - A^T||_2 / ||A||_2``."""
        A = self.matrix
        return float(np.linalg.norm(A - A.conj().T, 2) / np.linalg.norm(A, 2))


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of a dense operator with the near-zero cluster split off."""

    eigenvalues: np.ndarray
    near_zero: np.ndarray
    max_real_rest: float
    gap: float
    vectors: np.ndarray | None = None
    essential_curve: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ProjectionPair:
    """Rank-two spectral projection onto the generalized kernel and its complement."""

    f1: np.ndarray
    f2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    gram: np.ndarray
    P: DiscretizedOperator
    Q: DiscretizedOperator


@lru_cache(maxsize=8)
def _base_matrices(grid: Grid, a: float = 0.0):
    # D - a, (D - a)^2 and (1 - (D - a)^2)^{-1} as real dense matrices
    s1 = derivative_symbol(grid, 1, shift=a, full=True)
    s2 = derivative_symbol(grid, 2, shift=a, full=True)
    D = multiplier_matrix(grid, s1)
    D2 = multiplier_matrix(grid, s2)
    H = multiplier_matrix(grid, 1.0 / (1.0 - s2))
    for A in (D, D2, H):
        A.flags.writeable = False
    return D, D2, H


@lru_cache(maxsize=4)
def _integral_matrix(grid: Grid):
    C = cumulative_integral_matrix(grid)
    C.flags.writeable = False
    return C


def _l1_matrix(p: SolitonProfile, a: float = 0.0) -> np.ndarray:
    D, D2, _ = _base_matrices(p.grid, a)
    phi = p.phi
    phi2 = np.asarray(p.phi - p.m)
    # -d((c - phi)d) = -c D^2 + D phi D; the constant part uses the true
    # second-derivative symbol so the Nyquist mode is not a spurious kernel
    A = -p.c * D2 + D @ (phi[:, None] * D)
    A[np.diag_indices_from(A)] += -3 * phi + phi2 + (p.c - 2 * p.omega)
    return A


def build_L1(p: SolitonProfile) -> DiscretizedOperator:
    """Hessian ``L1`` of ``c E - F`` at the soliton (symmetric matrix)."""
    A = _l1_matrix(p)
    return DiscretizedOperator(0.5 * (A + A.T), "L1", p.grid)


def build_J(grid: Grid, a: float = 0.0) -> DiscretizedOperator:
    """``J = -(D - a)(1 - (D - a)^2)^{-1}``; skew for ``a = 0``."""
    D, _, H = _base_matrices(grid, a)
    return DiscretizedOperator(-D @ H, "J" if a == 0 else "J_a", grid)


def build_recursion(p: SolitonProfile) -> dict:
    """Recursion operator ``R``, its adjoint ``Rstar`` and ``K``.

    ``R = X H`` and ``K = H X`` with ``X = 2 omega + m + d^{-1} m d/dx`` and
    ``H = (1 - d^2/dx^2)^{-1}``, so ``R = (1 - d^2) K (1 - d^2)^{-1}``.
    """
    if np.min(p.m + p.omega) <= 0:
        raise InvalidParameter("recursion operator needs m + omega > 0")
    g = p.grid
    D, _, H = _base_matrices(g)
    C = _integral_matrix(g)
    X = C @ (p.m[:, None] * D)
    X[np.diag_indices_from(X)] += 2 * p.omega + p.m
    R = DiscretizedOperator(X @ H, "R", g)
    K = DiscretizedOperator(H @ X, "K", g)
    Rstar = DiscretizedOperator(R.matrix.T.copy(), "R*", g)
    return {"R": R, "Rstar": Rstar, "K": K}


def build_Ln(p: SolitonProfile, n: int, recursion: dict | None = None) -> DiscretizedOperator:
    """``L_n = R^{n-1} L1``."""
    if n < 1:
        raise InvalidParameter("L_n needs n >= 1")
    L = build_L1(p)
    if n == 1:
        return L
    R = (recursion or build_recursion(p))["R"]
    A = L.matrix
    for _ in range(n - 1):
        A = R.matrix @ A
    return DiscretizedOperator(A, f"L{n}", p.grid)


def localized_basis(grid: Grid, center: float, kcut: float | None = None, radius: float | None = None,
                    exclude=None) -> np.ndarray:
    """Orthonormal basis of band-limited fields localized near ``center``.

    Fields are band-limited to ``|k| <= kcut`` (default ``kmax / 3``),
    multiplied by ``exp(-((x - center) / radius)**8)`` (default radius
    ``L / 8``) and made orthogonal to the optional vector ``exclude``.
    """
    kcut = grid.kmax / 3 if kcut is None else kcut
    radius = grid.length / 8 if radius is None else radius
    k = 2 * np.pi * np.fft.fftfreq(grid.n, grid.h)
    keep = k[(k >= 0) & (k <= kcut)]
    phase = np.outer(grid.x - grid.x0, keep)
    B = np.concatenate([np.cos(phase), np.sin(phase[:, keep > 0])], axis=1)
    d = grid.periodic_offset(grid.x, center)
    B *= np.exp(-((d / radius) ** 8))[:, None]
    if exclude is not None:
        e = np.asarray(exclude, dtype=float)
        e = e / np.linalg.norm(e)
        B -= np.outer(e, e @ B)
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    return U[:, s > 1e-8 * s[0]]


def resolved_subspace(p: SolitonProfile, kcut: float | None = None, radius: float | None = None) -> np.ndarray:
    """Orthonormal basis of well-resolved fields localized near the crest.

    See :func:`localized_basis`; the translation mode ``phi'`` is removed.
    The nonlocal operators are only meaningful on such fields: constants
    and slowly decaying directions feel the box, and products of high
    modes alias.
    """
    return localized_basis(p.grid, p.x_peak, kcut, radius, exclude=p.dphi)


def _restricted(X, Y, Q):
    return float(np.linalg.norm((X - Y) @ Q, 2) / np.linalg.norm(X @ Q, 2))


def commutator_residuals(p: SolitonProfile, n: int = 1, basis: np.ndarray | None = None) -> dict:
    """Relative residuals of the operator identities at order ``n``.

    ``r1 = ||(L_n J R - R L_n J) Q|| / ||L_n J R Q||`` and
    ``r2 = ||(J L_n R* - R* J L_n) Q|| / ||J L_n R* Q||``, where ``Q`` is the
    basis from :func:`resolved_subspace`.  Also reported: the intertwining
    ``R* J = J R`` residual ``r_adj`` and the symmetry of ``L_n`` on the
    same subspace, ``r_sym``.
    """
    Q = resolved_subspace(p) if basis is None else basis
    rec = build_recursion(p)
    R, Rs = rec["R"].matrix, rec["Rstar"].matrix
    J = build_J(p.grid).matrix
    Ln = build_Ln(p, n, rec).matrix
    LJ = Ln @ J
    JL = J @ Ln
    sym = np.linalg.norm(Q.T @ (Ln - Ln.T) @ Q, 2) / np.linalg.norm(Q.T @ Ln @ Q, 2)
    return {
        "r1": _restricted(LJ @ R, R @ LJ, Q),
        "r2": _restricted(JL @ Rs, Rs @ JL, Q),
        "r_adj": _restricted(Rs @ J, J @ R, Q),
        "r_sym": float(sym),
    }


def symbol_curve(n: int, c: float, omega: float, zeta) -> np.ndarray:
    """Principal symbol of ``J L_n``: ``-(2 omega)^{n-1} i z (c z^2 + c - 2 omega) / (1 + z^2)^n``."""
    if not omega > 0:
        raise InvalidParameter("omega must be positive")
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    z = np.asarray(zeta, dtype=float)
    return -(2 * omega) ** (n - 1) * 1j * z * (c * z * z + c - 2 * omega) / (1 + z * z) ** n


def weight_bounds(c: float, omega: float) -> tuple[float, float]:
    """``(a1, a_star)``: admissible lower bound and optimal weight.

    ``a1 = -sqrt(1 - 2 omega / c)``; ``a_star`` maximizes ``|Lambda(a)|``.
    """
    check_speed(c, omega)
    a1 = -np.sqrt(1 - 2 * omega / c)
    a_star = -np.sqrt((c + omega - np.sqrt(omega * (4 * c + omega))) / c)
    return float(a1), float(a_star)


def lambda_weighted(c: float, omega: float, a: float) -> float:
    """Right edge ``Lambda = a c - 2 a omega / (1 - a^2)`` of the weighted essential spectrum."""
    return float(a * c - 2 * a * omega / (1 - a * a))


def _check_weight(p: SolitonProfile, a: float) -> float:
    a = float(a)
    if a != 0.0:
        WeightParam(a, p.c, p.omega)
    return a


def build_weighted_JL1(p: SolitonProfile, a: float) -> DiscretizedOperator:
    """``L_a = exp(a x) J L1 exp(-a x)`` via the shift ``d/dx -> d/dx - a``.

    ``a = 0`` gives the unweighted ``J L1``; otherwise ``a1 < a < 0`` is required.
    """
    a = _check_weight(p, a)
    D, _, H = _base_matrices(p.grid, a)
    L1a = _l1_matrix(p, a)
    if a == 0.0:
        L1a = 0.5 * (L1a + L1a.T)
    return DiscretizedOperator(-D @ H @ L1a, "J L1" if a == 0 else f"L_a(a={a:g})", p.grid)


def essential_curve_weighted(c: float, omega: float, a: float, k) -> np.ndarray:
    """``z(k) = c(ik + a) - 2 omega (ik + a) / (1 - (ik + a)^2)``.

    Samples where the denominator vanishes are returned as NaN.
    """
    check_speed(c, omega)
    s = 1j * np.asarray(k, dtype=float) + a
    den = 1 - s * s
    bad = np.abs(den) < 1e-14
    den = np.where(bad, 1.0, den)
    z = c * s - 2 * omega * s / den
    return np.where(bad, np.nan + 0j, z)


def _dual_anchor(a: float) -> float:
    # G_theta = int_{-inf}^x dm_c - theta * int dm_c must vanish where the
    # dual weight exp(-a x) grows
    if a < 0:
        return 1.0
    if a > 0:
        return 0.0
    return 0.5


def spectral_projections(p: SolitonProfile, a: float = 0.0, dc: float = 1e-4) -> ProjectionPair:
    """Projection onto the generalized kernel ``{f1, f2}`` of ``L_a``.

    ``f1 = e^{a x} phi'`` and ``f2 = e^{a x} d_c phi`` span the Jordan chain
    ``L_a f1 = 0``, ``L_a f2 = f1``.  The duals are
    ``g1 = e^{-a x}(C1 G + C2 m)`` and ``g2 = C3 e^{-a x} m`` with
    ``C1 = -C3 = -1 / (dE/dc)``, ``G`` an antiderivative of ``d_c m`` that
    vanishes where ``e^{-a x}`` grows, and ``C2`` fixing ``<f2, g1> = 0``.
    ``d_c phi`` is a centred difference with step ``dc``.
    """
    a = _check_weight(p, a)
    g = p.grid
    dphi_c, dm_c = speed_derivative(p.c, p.omega, g, p.x_peak, dc)
    dE = integrate(dphi_c * p.m, g)
    mass_c = integrate(dm_c, g)
    theta = _dual_anchor(a)
    G = cumulative_integral(dm_c, g) - theta * mass_c
    C1 = -1.0 / dE
    C3 = 1.0 / dE
    C2 = (0.5 - theta) * mass_c**2 / dE**2
    w = np.exp(a * g.periodic_offset(g.x, p.x_peak))
    f1 = w * p.dphi
    f2 = w * dphi_c
    g1 = (C1 * G + C2 * p.m) / w
    g2 = C3 * p.m / w
    F = np.stack([f1, f2])
    Gd = np.stack([g1, g2])
    gram = g.h * F @ Gd.T
    if np.linalg.cond(gram) > 1e6:
        raise NumericalBreakdown("ill-conditioned Gram matrix for the generalized kernel")
    P = g.h * F.T @ np.linalg.solve(gram, Gd)
    Pop = DiscretizedOperator(P, "P", g)
    Qop = DiscretizedOperator(np.eye(g.n) - P, "Q", g)
    return ProjectionPair(f1, f2, g1, g2, gram, Pop, Qop)


def eigen_spectrum(
    op: DiscretizedOperator,
    near_zero_tol: float = 1e-4,
    vectors: bool = False,
    essential_curve=None,
    metadata: dict | None = None,
) -> SpectrumReport:
    """Full dense spectrum of ``op`` with the cluster ``|lambda| < near_zero_tol`` split off."""
    A = op.matrix
    if A.shape[0] > 2048:
        raise InvalidParameter("dense eigensolve limited to n <= 2048")
    try:
        if np.allclose(A, A.conj().T, rtol=0, atol=1e-12 * np.abs(A).max()):
            w, V = sla.eigh(A) if vectors else (sla.eigvalsh(A), None)
            w = w.astype(complex)
        else:
            w, V = sla.eig(A, right=vectors) if vectors else (sla.eigvals(A), None)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalBreakdown(f"eigensolve failed: {exc}") from exc
    order = np.argsort(np.abs(w))
    w = w[order]
    V = V[:, order] if V is not None else None
    small = np.abs(w) < near_zero_tol
    rest = w[~small]
    return SpectrumReport(
        eigenvalues=w,
        near_zero=w[small],
        max_real_rest=float(rest.real.max()) if rest.size else float("nan"),
        gap=float(np.abs(rest).min()) if rest.size else float("nan"),
        vectors=V,
        essential_curve=None if essential_curve is None else np.asarray(essential_curve),
        metadata=dict(metadata or {}),
    )


def discrete_essential_spectrum(grid: Grid, c: float, omega: float, a: float) -> np.ndarray:
    """Eigenvalues of the discretized ``L_a`` with the soliton removed.

    These are the samples of :func:`essential_curve_weighted` at the grid
    wavenumbers (with ``k -> -k``), except at the Nyquist mode where the odd
    symbol vanishes and the value sits near the asymptote ``Re z = a c``.
    """
    check_speed(c, omega)
    s1 = derivative_symbol(grid, 1, shift=a, full=True)
    s2 = derivative_symbol(grid, 2, shift=a, full=True)
    return -s1 * (-c * s2 + c - 2 * omega) / (1 - s2)


def hausdorff_distance(points, curve, directed: bool = False) -> float:
    """Hausdorff distance between two finite sets of complex numbers.

    With ``directed=True`` only ``max_p min_q |p - q|`` is returned, i.e.
    how far ``points`` stray from ``curve``.
    """
    p = np.asarray(points).ravel()
    q = np.asarray(curve).ravel()
    q = q[np.isfinite(q)]
    d = np.abs(p[:, None] - q[None, :])
    fwd = float(d.min(axis=1).max())
    if directed:
        return fwd
    return max(fwd, float(d.min(axis=0).max()))


def near_zero_subspace(op: DiscretizedOperator, tol: float = 1e-2) -> np.ndarray:
    """Orthonormal basis of the invariant subspace for eigenvalues with ``|lambda| < tol``.

    Computed from a sorted Schur form, which stays well conditioned for the
    Jordan block where individual eigenvectors do not.
    """
    _, Z, sdim = sla.schur(op.matrix.astype(complex), output="complex", sort=lambda z: abs(z) < tol)
    return Z[:, :sdim]


def liouville_transform_potential(c: float, omega: float, z) -> np.ndarray:
    """Potential ``V`` of the Liouville normal form ``-d^2/dz^2 + (c - 2 omega) + V`` of ``L1``.

    With ``psi(z) = (c - 2 omega) sech^2(z sqrt(c - 2 omega) / 2)``::

        V = -3 psi + 3 psi'' / (4 (c - psi)) + 5 psi'^2 / (16 (c - psi)^2)
    """
    check_speed(c, omega)
    z = np.asarray(z, dtype=float)
    A = c - 2 * omega
    b = np.sqrt(A) / 2
    S = 1.0 / np.cosh(b * z) ** 2
    T = np.tanh(b * z)
    psi = A * S
    dpsi = -2 * A * b * S * T
    d2psi = 2 * A * b * b * S * (2 * T * T - S)
    q = c - psi
    return -3 * psi + 3 * d2psi / (4 * q) + 5 * dpsi**2 / (16 * q * q)


def semigroup_decay_rate(
    p: SolitonProfile,
    a: float,
    w0,
    T: float = 20.0,
    dt: float = 0.5,
    projections: ProjectionPair | None = None,
    operator: DiscretizedOperator | None = None,
) -> dict:
    """Exponential decay rate of ``exp(t L_a) w0`` in ``H^1``.

    The flow is advanced with the matrix exponential ``expm(dt L_a)`` and the
    slope of ``log ||w(t)||_{H^1}`` is fitted over ``[T/2, T]``.  ``w0`` must
    have no component on the generalized kernel: ``||P w0|| <= 1e-6 ||w0||``.

    Returns ``rate``, the fit residual (max deviation of the log-norm from
    the line), ``r2`` and the sampled ``times`` and ``norms``.
    """
    if T < 10:
        raise InvalidParameter("decay fit needs T >= 10")
    nsteps = int(round(T / dt))
    if nsteps < 4 or abs(nsteps * dt - T) > 1e-9 * T:
        raise InvalidParameter("T must be an integer multiple of dt (at least 4 steps)")
    w0 = np.asarray(w0, dtype=float)
    proj = projections or spectral_projections(p, a)
    if np.linalg.norm(proj.P(w0)) > 1e-6 * np.linalg.norm(w0):
        raise InvalidParameter("initial state has a component on the generalized kernel; apply Q first")
    La = operator or build_weighted_JL1(p, a)
    E = sla.expm(dt * La.matrix)
    g = p.grid
    times = dt * np.arange(nsteps + 1)
    norms = np.empty(nsteps + 1)
    w = w0.copy()
    norms[0] = h1_norm(w, g)
    for j in range(1, nsteps + 1):
        w = E @ w
        if not np.all(np.isfinite(w)):
            raise NumericalBreakdown("non-finite state in the linear flow")
        norms[j] = h1_norm(w, g)
    sel = times >= T / 2 - 1e-12
    y = np.log(norms[sel])
    coef = np.polyfit(times[sel], y, 1)
    fit = np.polyval(coef, times[sel])
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return {
        "rate": float(coef[0]),
        "residual": float(np.max(np.abs(y - fit))),
        "r2": 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0,
        "times": times,
        "norms": norms,
    }


def export_spectrum(report: SpectrumReport, directory, stem: str = "spectrum") -> tuple[Path, Path]:
    """Write eigenvalues to ``<stem>.csv`` (``re, im``) and metadata to ``<stem>.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{stem}.csv"
    with csv_path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["re", "im"])
        for z in report.eigenvalues:
            wr.writerow([f"{z.real:.17g}", f"{z.imag:.17g}"])
    meta = {
        "count": int(report.eigenvalues.size),
        "near_zero": [[float(z.real), float(z.imag)] for z in report.near_zero],
        "max_real_rest": report.max_real_rest,
        "gap": report.gap,
        **report.metadata,
    }
    json_path = directory / f"{stem}.json"
    json_path.write_text(json.dumps(meta, indent=2))
    return csv_path, json_path
