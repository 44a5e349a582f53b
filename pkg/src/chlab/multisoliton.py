"""Multi-soliton data: superpositions, the exact reflectionless N-soliton and train runs.

The exact N-soliton is built from its scattering data ``kappa_n`` in
``(0, 1/2)`` and positive norming constants ``C_n``.  With ``y = e^s``::

    A_np(y) = delta_np + C_n y^{-2 kappa_n} / (kappa_n + kappa_p)
    B(y)    = 1 - sum_{n,p} (A^{-1})_{pn} C_n y^{-2 kappa_n} / (kappa_n + 1/2)
    g(s)    = log int_0^{e^s} B^{-2} dy
    m + omega = omega exp(2 (g - s)) B^4  at the point x = g(s)

and ``u = (1 - d^2/dx^2)^{-1} m``.  Each constant evolves as
``C_n(t) = C_n(0) exp(2 kappa_n c_n t)`` with ``c_n = 2 omega / (1 - 4 kappa_n^2)``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .dynamics import evolve
from .errors import InvalidParameter, NumericalBreakdown
from .modulation import decompose, right_tail_decay, track
from .soliton import build_profile, check_speed, kappa_of_speed, speed_of_kappa
from .spectral import Grid, h1_norm, helmholtz_inverse

__all__ = [
    "superposition",
    "overlap",
    "NSolitonSpec",
    "n_soliton_momentum",
    "exact_n_soliton",
    "random_perturbation",
    "TrainConfig",
    "train_experiment",
    "write_report",
    "fit_superposition",
]

MIN_GAP = 10.0
OVERLAP_WARN = 1e-5


def overlap(params, grid: Grid, omega: float) -> float:
    """Largest pairwise ``|<m_j, phi_k>|`` (``H^1`` inner product of neighbours)."""
    profs = [build_profile(c, omega, grid, x_peak=x) for c, x in params]
    worst = 0.0
    for a, b in zip(profs, profs[1:]):
        worst = max(worst, abs(grid.h * float(np.sum(a.m * b.phi))))
    return worst


def superposition(params, grid: Grid, omega: float, min_gap: float = MIN_GAP) -> np.ndarray:
    """``sum_j phi_{c_j}(x - x_j)`` for ``params = [(c_j, x_j), ...]`` ordered by position.

    Gaps below ``min_gap`` raise ``InvalidParameter``; an ``H^1`` overlap of
    neighbours above ``1e-5`` emits a ``RuntimeWarning``.
    """
    params = [tuple(map(float, p)) for p in params]
    xs = [x for _, x in params]
    if any(b - a < min_gap for a, b in zip(xs, xs[1:])):
        raise InvalidParameter(f"soliton gaps must be at least {min_gap}")
    total = np.zeros(grid.n)
    for c, x in params:
        total += build_profile(c, omega, grid, x_peak=x).phi
    if len(params) > 1:
        ov = overlap(params, grid, omega)
        if ov > OVERLAP_WARN:
            warnings.warn(f"soliton overlap {ov:.2e} exceeds {OVERLAP_WARN:g}", RuntimeWarning, stacklevel=2)
    return total


@dataclass(frozen=True)
class NSolitonSpec:
    """Discrete scattering data of a reflectionless potential."""

    kappas: tuple
    norming: tuple
    omega: float

    def __post_init__(self):
        k = np.asarray(self.kappas, dtype=float)
        C = np.asarray(self.norming, dtype=float)
        if k.ndim != 1 or k.size == 0 or k.size != C.size:
            raise InvalidParameter("kappas and norming constants must be non-empty and of equal length")
        if not self.omega > 0:
            raise InvalidParameter("omega must be positive")
        if np.any(k <= 0) or np.any(k >= 0.5) or np.any(np.diff(k) <= 0):
            raise InvalidParameter("kappas must be increasing in (0, 1/2)")
        if np.any(C <= 0):
            raise InvalidParameter("norming constants must be positive")

    @property
    def speeds(self) -> np.ndarray:
        return np.array([speed_of_kappa(k, self.omega) for k in self.kappas])

    @classmethod
    def from_speeds(cls, speeds, centers, omega: float) -> "NSolitonSpec":
        """Data whose solitons would sit near ``centers`` at ``t = 0`` if alone.

        For a single soliton the crest is at ``log(C / (2 kappa)) / (2 kappa) + log((1 + 2 kappa) / (1 - 2 kappa))``.
        """
        ks, Cs = [], []
        for c, x in sorted(zip(speeds, centers)):
            check_speed(c, omega)
            k = kappa_of_speed(c, omega)
            shift = np.log((1 + 2 * k) / (1 - 2 * k))
            ks.append(k)
            Cs.append(2 * k * np.exp(2 * k * (x - shift)))
        return cls(tuple(ks), tuple(Cs), float(omega))


def _bracket(s, kappas, C):
    # B(e^s) for an array of s; A^{-1} by batched solve
    y2k = np.exp(-2.0 * np.outer(s, kappas))  # y^{-2 kappa_n}
    w = C[None, :] * y2k  # C_n y^{-2 kappa_n}
    N = kappas.size
    A = np.eye(N)[None, :, :] + w[:, :, None] / (kappas[:, None] + kappas[None, :])[None, :, :]
    Ainv = np.linalg.inv(A)
    coef = w / (kappas + 0.5)[None, :]
    # contract as sum_{n,p} (A^{-1})_{pn} coef_n: the other index order
    # diverges as y -> 0 once N >= 2
    return 1.0 - np.einsum("spn,sn->s", Ainv, coef)


def n_soliton_momentum(spec: NSolitonSpec, t: float, grid: Grid, ds: float = 0.005, margin: float = 40.0):
    """Momentum ``m`` of the N-soliton at time ``t`` sampled on ``grid``."""
    k = np.asarray(spec.kappas, dtype=float)
    C = np.asarray(spec.norming, dtype=float) * np.exp(2 * k * spec.speeds * t)
    # limit of B as y -> 0; x = g(s) ~ s on the right and s - 2 log(B_left) on the left
    Bl = float(np.prod((1 - 2 * k) / (1 + 2 * k)))
    lo = grid.x0 + 2 * np.log(Bl) - margin
    hi = grid.x0 + grid.length + margin
    s = np.arange(lo, hi + ds, ds)
    B = _bracket(s, k, C)
    if np.any(B <= 0):
        raise NumericalBreakdown("bracket vanished: invalid scattering data")
    integrand = np.exp(s) / B**2
    # int_0^{e^{s0}} B^{-2} dy with B constant to the left of s0
    G = Bl**-2 * np.exp(s[0]) + cumulative_simpson(integrand, x=s, initial=0.0)
    g = np.log(G)
    if np.any(np.diff(g) <= 0):
        raise NumericalBreakdown("parametric map is not monotone")
    s_of_x = CubicSpline(g, s)
    sx = s_of_x(grid.x)
    Bx = _bracket(sx, k, C)
    return spec.omega * (np.exp(2 * (grid.x - sx)) * Bx**4 - 1.0)


def exact_n_soliton(spec: NSolitonSpec, t: float, grid: Grid, tol: float = 1e-4) -> np.ndarray:
    """Field of the reflectionless N-soliton (``N <= 2``) at time ``t``.

    The parametric quadrature is repeated with half the step; if the two
    results differ by more than ``tol`` in ``H^1`` ``NumericalBreakdown`` is raised.
    """
    if len(spec.kappas) > 2:
        raise InvalidParameter("exact N-soliton construction supports N <= 2")
    m1 = n_soliton_momentum(spec, t, grid, ds=0.01)
    m2 = n_soliton_momentum(spec, t, grid, ds=0.005)
    u1 = helmholtz_inverse(m1, grid)
    u2 = helmholtz_inverse(m2, grid)
    if h1_norm(u1 - u2, grid) > tol:
        raise NumericalBreakdown("parametric quadrature did not converge under refinement")
    return u2


def random_perturbation(grid: Grid, rng, center: float, width: float = 8.0, kscale: float = 2.0) -> np.ndarray:
    """Seeded smooth perturbation localized near ``center``, unit ``H^1`` norm.

    Random Fourier coefficients with Gaussian envelope of scale ``kscale``,
    cut off above mode ``n/8``, multiplied by ``exp(-((x - center)/width)^2)``.
    """
    k = grid.k
    coef = rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size)
    coef *= np.exp(-((k / kscale) ** 2))
    coef[np.arange(k.size) > grid.n // 8] = 0.0
    f = np.fft.irfft(coef, n=grid.n) * np.exp(-(((grid.x - center) / width) ** 2))
    return f / h1_norm(f, grid)


@dataclass(frozen=True)
class TrainConfig:
    """Well-ordered soliton train and its evolution settings."""

    speeds: tuple
    positions: tuple
    omega: float = 1.0
    epsilon: float = 0.0
    seed: int = 0
    n: int = 4096
    length: float = 320.0
    dt: float = 0.02
    T: float = 20.0
    snapshot_stride: int = 50
    min_gap: float = MIN_GAP

    def __post_init__(self):
        c = np.asarray(self.speeds, dtype=float)
        x = np.asarray(self.positions, dtype=float)
        if c.size == 0 or c.size != x.size:
            raise InvalidParameter("speeds and positions must be non-empty and of equal length")
        if not c[0] > 2 * self.omega:
            raise InvalidParameter("invalid speed: need c_1 > 2*omega")
        if np.any(np.diff(c) <= 0):
            raise InvalidParameter("train must be well ordered: speeds increasing with position")
        if np.any(np.diff(x) < self.min_gap):
            raise InvalidParameter(f"train positions must be increasing with gaps >= {self.min_gap}")
        if self.epsilon < 0:
            raise InvalidParameter("epsilon must be non-negative")


@dataclass
class TrainReport:
    """Outcome of :func:`train_experiment`."""

    config: dict
    ok: bool
    message: str
    times: list = field(default_factory=list)
    speeds: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    distance: list = field(default_factory=list)
    sup_distance: float = float("nan")
    epsilon_abs: float = float("nan")
    gamma0: float = float("nan")
    fitted_A: float = float("nan")
    gap_slopes: list = field(default_factory=list)
    ordered: bool = True
    tail_right: list = field(default_factory=list)
    energy_drift: float = float("nan")


def train_experiment(cfg: TrainConfig) -> TrainReport:
    """Evolve a (perturbed) train, track all solitons and measure orbital stability.

    The distance to the soliton-sum manifold is ``||v||_{H^1}`` from the
    modulation.  The fitted constant is
    ``A = sup_t ||v|| / (eps + exp(-gamma0 L0))`` with ``eps`` the initial
    perturbation size, ``L0`` the smallest initial gap and
    ``gamma0 = sqrt(1 - 2 omega / c_1) / 2``.
    """
    grid = Grid(cfg.n, cfg.length)
    params = list(zip(map(float, cfg.speeds), map(float, cfg.positions)))
    span = max(cfg.positions) - min(cfg.positions) + max(cfg.speeds) * cfg.T
    if cfg.length < span + 40:
        raise InvalidParameter(f"box length {cfg.length} too small for the train (need > {span + 40:.1f})")
    u0 = superposition(params, grid, cfg.omega, cfg.min_gap)
    eps_abs = 0.0
    if cfg.epsilon > 0:
        rng = np.random.default_rng(cfg.seed)
        center = float(np.mean(cfg.positions))
        width = 0.5 * (max(cfg.positions) - min(cfg.positions)) + 8.0
        pert = random_perturbation(grid, rng, center, width)
        eps_abs = cfg.epsilon * h1_norm(u0, grid)
        u0 = u0 + eps_abs * pert
    report = TrainReport(config=asdict(cfg), ok=False, message="")
    report.epsilon_abs = eps_abs
    try:
        traj = evolve(u0, grid, cfg.omega, cfg.dt, cfg.T, snapshot_stride=cfg.snapshot_stride)
    except NumericalBreakdown as exc:
        report.message = f"evolution failed: {exc}"
        return report
    res = track(traj, cfg.omega, params)
    report.times = res.times.tolist()
    report.speeds = res.cs.tolist()
    report.positions = res.xs.tolist()
    report.distance = res.vnorm.tolist()
    report.energy_drift = traj.relative_drift("E")
    if res.exited:
        report.message = f"left the modulation tube: {res.message}"
        return report
    report.ordered = bool(np.all(np.diff(res.cs, axis=1) > 0) and np.all(np.diff(res.xs, axis=1) > 0))
    report.sup_distance = float(res.vnorm.max())
    gaps = np.diff(res.xs, axis=1)
    report.gap_slopes = [float(np.polyfit(res.times, gaps[:, j], 1)[0]) for j in range(gaps.shape[1])]
    L0 = float(np.min(np.diff(cfg.positions))) if len(cfg.positions) > 1 else np.inf
    report.gamma0 = 0.5 * float(np.sqrt(1 - 2 * cfg.omega / cfg.speeds[0]))
    report.fitted_A = report.sup_distance / (eps_abs + np.exp(-report.gamma0 * L0))
    tails = right_tail_decay(traj, res.xs[:, 0], res.states)
    report.tail_right = tails["dev_right"].tolist()
    report.ok = report.ordered
    report.message = "ok" if report.ok else "ordering lost"
    return report


def write_report(report: TrainReport, path) -> Path:
    """Dump a :class:`TrainReport` as JSON."""
    path = Path(path)
    path.write_text(json.dumps(asdict(report), indent=2, default=float))
    return path


def fit_superposition(u, grid: Grid, omega: float, guesses):
    """Best two-term fit via the modulation decomposition: ``(state, ||v||_{H^1})``."""
    st = decompose(u, grid, omega, guesses)
    return st, h1_norm(st.v, grid)

