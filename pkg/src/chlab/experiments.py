"""Registry of named experiments run by the command line.

Each experiment takes a validated configuration, writes plot-ready CSV
files into an output directory and returns a list of assertions.  Every
assertion carries a stable identifier, the measured value, the tolerance
and the comparison used, so a report can be audited without rerunning.

Configurations are nested mappings with the sections ``grid``,
``physics``, ``evolution`` and ``numerics``; which keys a section accepts
and their defaults are fixed per experiment.
"""

from __future__ import annotations

import difflib
import operator
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from . import dynamics, gkdv, linops, modulation, multisoliton, scattering, soliton
from .errors import ConfigError, InvalidParameter
from .io import sha256, write_columns, write_csv, write_json
from .spectral import Grid, derivative, h1_norm

__all__ = [
    "Assertion",
    "Context",
    "Experiment",
    "REGISTRY",
    "list_experiments",
    "get_experiment",
    "validate_config",
    "run_experiment",
]

SECTIONS = ("grid", "physics", "evolution", "numerics")
_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq}


@dataclass
class Assertion:
    """One checked property of a run."""

    id: str
    description: str
    measured: float
    comparator: str
    tolerance: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "description": self.description,
            "measured": self.measured,
            "comparator": self.comparator,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


@dataclass
class Context:
    """Run state handed to an experiment: resolved config, output directory, RNG."""

    config: dict
    out: Path
    rng: np.random.Generator
    assertions: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def section(self, name: str) -> dict:
        return self.config.get(name, {})

    def check(self, ident: str, description: str, measured, comparator: str, tolerance) -> bool:
        measured = float(measured)
        ok = bool(np.isfinite(measured) and _OPS[comparator](measured, float(tolerance)))
        self.assertions.append(Assertion(ident, description, measured, comparator, float(tolerance), ok))
        return ok

    def record(self, key: str, value) -> None:
        self.measured[key] = value

    def columns(self, name: str, columns: dict) -> Path:
        path = write_columns(self.out / name, columns)
        self.files.append(path)
        return path

    def rows(self, name: str, header, rows) -> Path:
        path = write_csv(self.out / name, header, rows)
        self.files.append(path)
        return path


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    module: str
    defaults: dict
    func: Callable


REGISTRY: dict[str, Experiment] = {}


def _register(name: str, description: str, module: str, defaults: dict):
    def deco(func):
        if name in REGISTRY:
            raise RuntimeError(f"duplicate experiment {name}")
        REGISTRY[name] = Experiment(name, description, module, defaults, func)
        return func

    return deco


def list_experiments() -> list[tuple[str, str]]:
    """``(name, description)`` for every registered experiment, in registry order."""
    return [(e.name, e.description) for e in REGISTRY.values()]


def get_experiment(name: str) -> Experiment:
    """Look up an experiment; unknown names raise ``ConfigError`` listing near matches."""
    try:
        return REGISTRY[name]
    except KeyError:
        near = difflib.get_close_matches(str(name), list(REGISTRY), n=3, cutoff=0.4)
        hint = f"; did you mean: {', '.join(near)}" if near else ""
        err = ConfigError(f"unknown experiment {name!r}{hint}")
        err.suggestions = near
        raise err from None


# -- configuration -----------------------------------------------------------


def _coerce(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        value = float(value)
        if not np.isfinite(value):
            raise ConfigError(f"{where} must be finite")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where} must be a list of numbers")
        return [float(v) for v in value]
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    raise ConfigError(f"{where}: unsupported default type")


def _check_physics(phys: dict) -> None:
    omega = phys.get("omega")
    if omega is not None and not omega > 0:
        raise ConfigError(f"invalid speed: omega={omega} must be positive")
    c = phys.get("c")
    if c is not None and omega is not None and c <= 2 * omega:
        raise ConfigError(f"invalid speed: c ≤ 2ω (c={c:g}, ω={omega:g})")
    speeds = phys.get("speeds")
    if speeds is not None and omega is not None:
        if not speeds or min(speeds) <= 2 * omega:
            raise ConfigError(f"invalid speed: every speed must exceed 2ω, c ≤ 2ω in {speeds}")
    a = phys.get("a")
    if a is not None and c is not None and omega is not None and c > 2 * omega and a != 0:
        a1 = -np.sqrt(1 - 2 * omega / c)
        if not a1 < a < 0:
            raise ConfigError(f"weight a={a:g} must lie in ({a1:.6g}, 0)")


def validate_config(raw) -> dict:
    """Check ``raw`` against the schema of its experiment and fill in defaults.

    The result always contains ``experiment``, ``seed``, ``output`` (possibly
    empty) and the full set of sections of that experiment.
    """
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    if "experiment" not in raw:
        raise ConfigError("configuration needs an 'experiment' entry")
    exp = get_experiment(raw["experiment"])
    allowed = {"experiment", "seed", "output", *exp.defaults}
    extra = sorted(set(raw) - allowed)
    if extra:
        raise ConfigError(f"unknown top-level keys for {exp.name}: {', '.join(extra)}")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    output = raw.get("output", "")
    if not isinstance(output, str):
        raise ConfigError("output must be a string")
    cfg = {"experiment": exp.name, "seed": seed, "output": output}
    for sec, defaults in exp.defaults.items():
        given = raw.get(sec)
        given = {} if given is None else given
        if not isinstance(given, dict):
            raise ConfigError(f"section {sec} must be a mapping")
        unknown = sorted(set(given) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown keys in {sec}: {', '.join(unknown)}")
        cfg[sec] = {k: _coerce(sec, k, given.get(k, v), v) for k, v in defaults.items()}
    if "grid" in cfg:
        try:
            Grid(cfg["grid"]["n"], cfg["grid"]["length"])
        except InvalidParameter as exc:
            raise ConfigError(str(exc)) from None
    if "physics" in cfg:
        _check_physics(cfg["physics"])
    return cfg


def run_experiment(cfg: dict, out_dir) -> dict:
    """Run a validated configuration and write ``report.json`` into ``out_dir``.

    Returns the report dictionary.  Module errors propagate to the caller.
    """
    exp = get_experiment(cfg["experiment"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(config=cfg, out=out, rng=np.random.default_rng(cfg["seed"]))
    t0 = time.perf_counter()
    exp.func(ctx)
    wall = time.perf_counter() - t0
    passed = all(a.passed for a in ctx.assertions)
    report = {
        "experiment": exp.name,
        "module": exp.module,
        "status": "pass" if passed else "fail",
        "config": cfg,
        "assertions": [a.as_dict() for a in ctx.assertions],
        "measured": ctx.measured,
        "files": [{"path": p.name, "sha256": sha256(p)} for p in ctx.files],
        "wall_time": wall,
    }
    write_json(out / "report.json", report)
    return report


# -- shared helpers ----------------------------------------------------------


def _grid(ctx) -> Grid:
    g = ctx.section("grid")
    return Grid(g["n"], g["length"])


def _rel(a, b) -> float:
    return float(abs(a - b) / abs(b))


def _l2(f, grid) -> float:
    return float(np.sqrt(grid.h * np.sum(np.abs(f) ** 2)))


_CH = {"c": 4.0, "omega": 1.0}
_G1024 = {"n": 1024, "length": 80.0}
_G512 = {"n": 512, "length": 80.0}


# -- soliton -----------------------------------------------------------------


@_register("profile-identities", "stationary ODE, first integral, slope bound, momentum sign and decay rate of a soliton",
           "soliton", {"grid": dict(_G1024), "physics": dict(_CH)})
def _profile_identities(ctx):
    ph = ctx.section("physics")
    p = soliton.build_profile(ph["c"], ph["omega"], _grid(ctx))
    ctx.check("soliton.stationary_residual", "sup |stationary ODE residual|", soliton.stationary_residual(p), "<", 1e-7)
    ctx.check("soliton.first_integral_residual", "sup |first-integral residual|",
              soliton.first_integral_residual(p), "<", 1e-7)
    ctx.check("soliton.slope_bound", "max(|phi'| - phi)", np.max(np.abs(p.exact_derivative()) - p.phi), "<=", 1e-12)
    ctx.check("soliton.momentum_positive", "min m over the resolved wave", soliton.momentum_positivity(p), ">", 0.0)
    rate = soliton.tail_decay_rate(p)
    ctx.check("soliton.decay_rate", "relative error of the fitted tail rate vs sqrt(1 - 2 omega / c)",
              _rel(rate, p.decay_rate), "<", 0.05)
    ctx.record("decay_rate_fit", rate)
    ctx.record("kappa", p.kappa)
    ctx.columns("profile.csv", {"x": p.grid.x, "phi": p.phi, "dphi": p.dphi, "m": p.m})


@_register("invariant-closed-forms", "quadrature energy and Hamiltonian against closed forms, speed derivatives",
           "soliton", {"grid": dict(_G1024), "physics": dict(_CH), "numerics": {"dc": 1e-3}})
def _invariant_closed_forms(ctx):
    ph = ctx.section("physics")
    c, w, dc = ph["c"], ph["omega"], ctx.section("numerics")["dc"]
    g = _grid(ctx)
    cf = soliton.closed_form_invariants(c, w)
    num = soliton.numeric_invariants(soliton.build_profile(c, w, g))
    ctx.check("soliton.energy_closed_form", "relative error of E vs H1", _rel(num["E"], cf["H1"]), "<", 1e-6)
    ctx.check("soliton.hamiltonian_closed_form", "relative error of F vs H2", _rel(num["F"], cf["H2"]), "<", 1e-6)
    plus = soliton.numeric_invariants(soliton.build_profile(c + dc, w, g))
    minus = soliton.numeric_invariants(soliton.build_profile(c - dc, w, g))
    dE = (plus["E"] - minus["E"]) / (2 * dc)
    dF = (plus["F"] - minus["F"]) / (2 * dc)
    ctx.check("soliton.dE_dc", "relative error of the centred dE/dc vs 4 kappa c", _rel(dE, cf["dH1_dc"]), "<", 1e-3)
    ctx.check("soliton.dF_dc", "relative error of the centred dF/dc vs 4 kappa c^2", _rel(dF, cf["dH2_dc"]), "<", 1e-3)
    ctx.record("closed_form", cf)
    ctx.record("quadrature", num)
    ctx.rows("invariants.csv", ["quantity", "quadrature", "closed_form"],
             [["E", num["E"], cf["H1"]], ["F", num["F"], cf["H2"]], ["dE_dc", dE, cf["dH1_dc"]],
              ["dF_dc", dF, cf["dH2_dc"]]])


# -- dynamics ----------------------------------------------------------------


@_register("evolve-soliton", "RK4 propagation of a soliton: shape error, invariant drift and convergence order",
           "dynamics", {"grid": dict(_G1024), "physics": dict(_CH),
                        "evolution": {"T": 10.0, "dt": 1e-3, "order_T": 1.8, "order_dt": 0.03}})
def _evolve_soliton(ctx):
    ph, ev = ctx.section("physics"), ctx.section("evolution")
    g = _grid(ctx)
    p = soliton.build_profile(ph["c"], ph["omega"], g)
    stride = max(1, int(round(ev["T"] / ev["dt"])) // 100)
    tr = dynamics.evolve(p.phi, g, ph["omega"], ev["dt"], ev["T"], snapshot_stride=stride)
    ref = soliton.build_profile(ph["c"], ph["omega"], g, x_peak=g.center + ph["c"] * ev["T"])
    err, _ = dynamics.shift_minimized_error(tr.final, ref.phi, g)
    ctx.check("dynamics.shape_error", "shift-minimized H1 error at T", err, "<", 1e-4)
    ctx.check("dynamics.energy_drift", "relative drift of E", tr.relative_drift("E"), "<", 1e-8)
    ctx.check("dynamics.hamiltonian_drift", "relative drift of F", tr.relative_drift("F"), "<", 1e-8)
    errs = []
    for dt in (ev["order_dt"], ev["order_dt"] / 2):
        t2 = dynamics.evolve(p.phi, g, ph["omega"], dt, ev["order_T"], snapshot_stride=10**9)
        r2 = soliton.build_profile(ph["c"], ph["omega"], g, x_peak=g.center + ph["c"] * ev["order_T"])
        errs.append(dynamics.shift_minimized_error(t2.final, r2.phi, g)[0])
    ctx.check("dynamics.rk4_order_factor", "error ratio under dt halving", errs[0] / errs[1], ">=", 10.0)
    ctx.record("speed", dynamics.peak_speed(tr))
    ctx.record("order_errors", errs)
    ctx.columns("invariants.csv", {"t": tr.times, **tr.invariants})


# -- scattering --------------------------------------------------------------


@_register("scattering-unitarity", "transmission and reflection of the one-soliton potential",
           "scattering", {"grid": dict(_G1024), "physics": dict(_CH), "numerics": {"kcount": 256, "kmax": 8.0}})
def _scattering_unitarity(ctx):
    ph, nu = ctx.section("physics"), ctx.section("numerics")
    g = _grid(ctx)
    p = soliton.build_profile(ph["c"], ph["omega"], g)
    k = scattering.default_kgrid(nu["kcount"], nu["kmax"])
    sd = scattering.scattering_coeffs(p.m, g, ph["omega"], k)
    ctx.check("scattering.unitarity", "max_k ||a|^2 - |b|^2 - 1|", np.max(np.abs(sd.unitarity_defect)), "<", 1e-6)
    ctx.check("scattering.reflectionless", "max_k |b(k)|", np.max(np.abs(sd.b)), "<", 1e-4)
    ctx.columns("scattering.csv", {"k": sd.k, "a": sd.a, "b": sd.b})


@_register("discrete-spectrum", "bound state of the one-soliton potential against the closed form",
           "scattering", {"grid": dict(_G1024), "physics": dict(_CH)})
def _discrete_spectrum(ctx):
    ph = ctx.section("physics")
    g = _grid(ctx)
    p = soliton.build_profile(ph["c"], ph["omega"], g)
    ds = scattering.discrete_spectrum(p.m, g, ph["omega"])
    kap = ds.kappas
    ctx.check("scattering.eigenvalue_count", "number of discrete eigenvalues", kap.size, "==", 1)
    exact = soliton.kappa_of_speed(ph["c"], ph["omega"])
    ctx.check("scattering.kappa", "|kappa_1 - sqrt(1 - 2 omega / c) / 2|",
              abs(kap[0] - exact) if kap.size else np.inf, "<", 1e-5)
    ctx.record("kappas", kap)
    ctx.record("b_n", ds.b_n)
    ctx.record("adot_n", ds.adot_n)
    ctx.record("norming_plus", ds.norming(1))
    ctx.record("norming_minus", ds.norming(-1))
    ctx.columns("kappas.csv", {"kappa": kap, "speed": [soliton.speed_of_kappa(x, ph["omega"]) for x in kap],
                               "b_n": ds.b_n, "adot_n": ds.adot_n,
                               "norming_plus": ds.norming(1), "norming_minus": ds.norming(-1)})


@_register("completeness", "reconstruction of test functions from squared eigenfunctions",
           "scattering", {"grid": dict(_G1024), "physics": dict(_CH),
                          "numerics": {"kcount": 256, "kmax": 8.0, "width": 1.0, "offset": 1.0}})
def _completeness(ctx):
    ph, nu = ctx.section("physics"), ctx.section("numerics")
    g = _grid(ctx)
    p = soliton.build_profile(ph["c"], ph["omega"], g)
    k = scattering.default_kgrid(nu["kcount"], nu["kmax"])
    y = (g.x - g.center) / nu["width"]
    tests = {"even": np.exp(-y * y), "odd": y * np.exp(-y * y),
             "shifted": np.exp(-((y - nu["offset"]) ** 2) / 2)}
    cols = {"x": g.x}
    zc, zd = scattering.completeness_expansion(p, np.array(list(tests.values())), k)
    for i, (name, z) in enumerate(tests.items()):
        err = _l2(zc[i] + zd[i] - z, g) / _l2(z, g)
        ctx.check(f"scattering.completeness.{name}", f"relative L2 reconstruction error ({name} test function)",
                  err, "<", 1e-6)
        cols[f"z_{name}"] = z
        cols[f"continuous_{name}"] = zc[i]
        cols[f"discrete_{name}"] = zd[i]
    ctx.columns("completeness.csv", cols)


# -- linops ------------------------------------------------------------------


@_register("operator-algebra", "recursion eigenrelations, operator identities and the L_n hierarchy",
           "linops", {"grid": dict(_G512), "physics": dict(_CH), "numerics": {"max_order": 3}})
def _operator_algebra(ctx):
    ph, nu = ctx.section("physics"), ctx.section("numerics")
    g = _grid(ctx)
    p = soliton.build_profile(ph["c"], ph["omega"], g)
    rec = linops.build_recursion(p)
    R, Rs = rec["R"], rec["Rstar"]
    nr = np.linalg.norm
    c = p.c
    ctx.check("linops.R_eigen_m", "||R m - c m|| / ||c m||", nr(R(p.m) - c * p.m) / nr(c * p.m), "<", 1e-5)
    ctx.check("linops.Rstar_eigen_dphi", "||R* phi' - c phi'|| / ||c phi'||",
              nr(Rs(p.dphi) - c * p.dphi) / nr(c * p.dphi), "<", 1e-5)
    gg = 1 / np.sqrt(p.m + p.omega)
    rv = R(gg - derivative(gg, g, 2))
    ctx.check("linops.R_constant", "max |R (1 - d^2)(m + omega)^{-1/2} - 2 sqrt(omega)|",
              np.max(np.abs(rv - 2 * np.sqrt(p.omega))), "<", 1e-6)
    rows = []
    prev = linops.build_Ln(p, 1, rec)
    for n in range(1, nu["max_order"] + 1):
        res = linops.commutator_residuals(p, n)
        ctx.check(f"linops.commutator1.n{n}", f"operator identity (L_n J) R = R (L_n J), n={n}", res["r1"], "<", 1e-6)
        ctx.check(f"linops.commutator2.n{n}", f"operator identity (J L_n) R* = R* (J L_n), n={n}", res["r2"], "<", 1e-6)
        nxt = linops.build_Ln(p, n + 1, rec)
        hier = nr(nxt.matrix - R.matrix @ prev.matrix) / nr(nxt.matrix)
        ctx.check(f"linops.hierarchy.n{n}", f"||L_{n + 1} - R L_{n}|| / ||L_{n + 1}||", hier, "<", 1e-8)
        ctx.check(f"linops.kernel.n{n + 1}", f"||L_{n + 1} phi'|| / ||phi'||",
                  nr(nxt(p.dphi)) / nr(p.dphi), "<", 1e-6)
        rows.append([n, res["r1"], res["r2"], res["r_adj"], hier])
        prev = nxt
    ctx.rows("commutators.csv", ["n", "r1", "r2", "r_adj", "hierarchy"], rows)


@_register("spectrum-weighted", "dense spectrum of the weighted linearized operator and its projections",
           "linops", {"grid": dict(_G512), "physics": {**_CH, "a": -0.3}})
def _spectrum_weighted(ctx):
    ph = ctx.section("physics")
    g = _grid(ctx)
    p = soliton.build_profile(ph["c"], ph["omega"], g)
    a = ph["a"]
    rep = linops.eigen_spectrum(linops.build_weighted_JL1(p, a), near_zero_tol=1e-4)
    lam = linops.lambda_weighted(p.c, p.omega, a)
    kk = np.linspace(-g.kmax, g.kmax, 200001)
    curve = linops.essential_curve_weighted(p.c, p.omega, a, kk)
    edge = float(np.nanmax(curve.real))
    ctx.check("linops.near_zero_count", "eigenvalues with |lambda| < 1e-4", rep.near_zero.size, "==", 2)
    ctx.check("linops.spectral_gap", "max Re lambda over the rest minus Lambda/2", rep.max_real_rest - lam / 2, "<", 0)
    ctx.check("linops.Lambda_closed_form", "|Lambda - max Re of the essential curve|", abs(lam - edge), "<", 1e-5)
    pr = linops.spectral_projections(p, a)
    ctx.check("linops.biorthogonality", "max |<f_j, g_k> - delta_jk|", np.max(np.abs(pr.gram - np.eye(2))), "<", 1e-5)
    a1, a_star = linops.weight_bounds(p.c, p.omega)
    ctx.record("Lambda", lam)
    ctx.record("max_real_rest", rep.max_real_rest)
    ctx.record("a1", a1)
    ctx.record("a_star", a_star)
    ev = rep.eigenvalues
    ctx.columns("spectrum.csv", {"re": ev.real, "im": ev.imag})


@_register("semigroup-decay", "H1 decay rate of projected data under the weighted linear flow",
           "linops", {"grid": dict(_G512), "physics": {**_CH, "a": -0.3},
                      "evolution": {"T": 20.0, "dt": 0.5}, "numerics": {"kscale": 3.0}})
def _semigroup_decay(ctx):
    ph, ev, nu = ctx.section("physics"), ctx.section("evolution"), ctx.section("numerics")
    g = _grid(ctx)
    p = soliton.build_profile(ph["c"], ph["omega"], g)
    a = ph["a"]
    pr = linops.spectral_projections(p, a)
    La = linops.build_weighted_JL1(p, a)
    k = 2 * np.pi * np.fft.fftfreq(g.n, g.h)
    coef = (ctx.rng.standard_normal(g.n) + 1j * ctx.rng.standard_normal(g.n)) * np.exp(-((k / nu["kscale"]) ** 2))
    w0 = pr.Q(np.real(np.fft.ifft(coef)) * np.sqrt(g.n))
    r = linops.semigroup_decay_rate(p, a, w0, ev["T"], ev["dt"], projections=pr, operator=La)
    r10 = linops.semigroup_decay_rate(p, a, 10 * w0, ev["T"], ev["dt"], projections=pr, operator=La)
    ctx.check("linops.decay_rate", "fitted H1 decay rate", r["rate"], "<=", -0.05)
    ctx.check("linops.decay_fit_r2", "R^2 of the log-linear fit", r["r2"], ">", 0.99)
    ctx.check("linops.decay_linearity", "|rate(10 w0) - rate(w0)|", abs(r10["rate"] - r["rate"]), "<", 1e-8)
    ctx.record("rate", r["rate"])
    ctx.columns("decay.csv", {"t": r["times"], "h1_norm": r["norms"]})


@_register("liouville-potential", "potential of the Liouville normal form of L1 and its rational-sech form",
           "linops", {"physics": {"c": 6.0, "omega": 1.0}, "numerics": {"zmax": 8.0, "count": 401, "fd_step": 1e-3}})
def _liouville_potential(ctx):
    ph, nu = ctx.section("physics"), ctx.section("numerics")
    c, w = ph["c"], ph["omega"]
    z = np.linspace(-nu["zmax"], nu["zmax"], nu["count"])
    V = linops.liouville_transform_potential(c, w, z)
    # independent evaluation: the same normal form with psi differentiated by
    # fourth-order central differences
    A = c - 2 * w
    psi = lambda s: A / np.cosh(s * np.sqrt(A) / 2) ** 2  # noqa: E731
    h = nu["fd_step"]
    d1 = (psi(z - 2 * h) - 8 * psi(z - h) + 8 * psi(z + h) - psi(z + 2 * h)) / (12 * h)
    d2 = (-psi(z - 2 * h) + 16 * psi(z - h) - 30 * psi(z) + 16 * psi(z + h) - psi(z + 2 * h)) / (12 * h * h)
    q = c - psi(z)
    Vfd = -3 * psi(z) + 3 * d2 / (4 * q) + 5 * d1**2 / (16 * q * q)
    ctx.check("linops.liouville_normal_form", "max |V - finite-difference normal form|", np.max(np.abs(V - Vfd)), "<", 1e-6)
    cols = {"z": z, "V": V}
    if c == 6.0 and w == 1.0:
        S = 1 / np.cosh(z) ** 2
        rational = (-90 * S + 110 * S**2 - 35 * S**3) / (3 - 2 * S) ** 2
        reference = (90 * S - 116 * S**2 + 44 * S**3) / (3 - 2 * S) ** 2
        ctx.check("linops.liouville_rational", "max |V - (-90S + 110S^2 - 35S^3)/(3 - 2S)^2|",
                  np.max(np.abs(V - rational)), "<", 1e-10)
        ctx.record("deviation_from_reference_rational_form", float(np.max(np.abs(V - reference))))
        cols["rational"] = rational
    ctx.record("V_at_0", float(linops.liouville_transform_potential(c, w, np.array([0.0]))[0]))
    ctx.columns("potential.csv", cols)


# -- modulation --------------------------------------------------------------

_PERTURBED = {
    "grid": {"n": 4096, "length": 320.0},
    "physics": {**_CH, "x_start": -120.0, "epsilon": 0.01, "width": 8.0, "kscale": 2.0},
    "evolution": {"T": 40.0, "dt": 0.02, "snapshot_stride": 25},
}


@lru_cache(maxsize=2)
def perturbed_run(n, length, c, omega, x_start, epsilon, width, kscale, seed, T, dt, stride):
    """Evolve a soliton plus a seeded perturbation of relative ``H^1`` size ``epsilon`` and track it."""
    g = Grid(n, length)
    p = soliton.build_profile(c, omega, g, x_peak=x_start)
    rng = np.random.default_rng(seed)
    pert = multisoliton.random_perturbation(g, rng, x_start, width, kscale)
    u0 = p.phi + epsilon * h1_norm(p.phi, g) * pert
    tr = dynamics.evolve(u0, g, omega, dt, T, snapshot_stride=stride)
    res = modulation.track(tr, omega, [(c, x_start)])
    return tr, res


def _perturbed(ctx):
    g, ph, ev = ctx.section("grid"), ctx.section("physics"), ctx.section("evolution")
    return perturbed_run(g["n"], g["length"], ph["c"], ph["omega"], ph["x_start"], ph["epsilon"], ph["width"],
                         ph["kscale"], ctx.config["seed"], ev["T"], ev["dt"], ev["snapshot_stride"])


@_register("modulation-track", "modulation parameters of a perturbed soliton and the modulation equations",
           "modulation", _PERTURBED)
def _modulation_track(ctx):
    tr, res = _perturbed(ctx)
    ctx.check("modulation.in_tube", "1 if the decomposition succeeded at every snapshot", float(not res.exited), "==", 1)
    ctx.check("modulation.orthogonality", "max orthogonality residual", res.ortho.max(), "<", 1e-10)
    r = res.ratios()
    ctx.check("modulation.cdot_bound", "fitted C in |c'| <= C ||v||^2", r["cdot_over_v2"], "<", 1e3)
    ctx.check("modulation.xdot_bound", "fitted C in |x' - c| <= C ||v||", r["xdot_minus_c_over_v"], "<", 1e3)
    ctx.record("ratios", r)
    ctx.record("c_final", float(res.cs[-1, 0]))
    modulation.export_track_csv(res, ctx.out / "track.csv")
    ctx.files.append(ctx.out / "track.csv")


@_register("monotonicity", "weighted energy functionals E_R, E_L, F_R along a perturbed soliton",
           "modulation", {**_PERTURBED, "numerics": {"x0": 10.0, "K": 3.0, "alpha": 0.1}})
def _monotonicity(ctx):
    tr, res = _perturbed(ctx)
    nu = ctx.section("numerics")
    x = res.xs[:, 0]
    fs = modulation.functionals(tr, x, nu["x0"], nu["K"], nu["alpha"])
    s_er = modulation.monotonicity_slack(fs.E_R, nu["x0"], nu["K"])
    s_fr = modulation.monotonicity_slack(fs.F_R, nu["x0"], nu["K"])
    s_el = modulation.monotonicity_slack(fs.E_L, nu["x0"], nu["K"], increasing=True)
    ctx.check("modulation.ER_slack", "slack constant C for E_R almost non-increasing", s_er["C"], "<", 1.0)
    ctx.check("modulation.FR_slack", "slack constant C for F_R almost non-increasing", s_fr["C"], "<", 1.0)
    ctx.check("modulation.EL_slack", "slack constant C for E_L almost non-decreasing", s_el["C"], "<", 1.0)
    ctx.check("modulation.energy_split", "max |E - E_R - E_L| / E", np.max(np.abs(fs.E_middle)) / fs.E_total[0], "<", 1e-12)
    ctx.record("K_bound", fs.params["K_bound"])
    ctx.record("slack", {"E_R": s_er, "F_R": s_fr, "E_L": s_el})
    ctx.columns("functionals.csv", {"t": fs.times, "E_R": fs.E_R, "E_L": fs.E_L, "F_R": fs.F_R,
                                    "E_x0t0": fs.E_x0t0, "F_x0t0": fs.F_x0t0})


@_register("asymptotic-single", "decay of the perturbation to the right of a single soliton",
           "modulation", {**_PERTURBED, "numerics": {"offset": 10.0}})
def _asymptotic_single(ctx):
    tr, res = _perturbed(ctx)
    nu = ctx.section("numerics")
    x = res.xs[:, 0]
    tl = modulation.right_tail_decay(tr, x, res.states, offset=nu["offset"])
    vr = tl["v_right"]
    ctx.check("modulation.tail_halving", "||v||_{H1(x > x(t) - offset)} at T over its initial value",
              vr[-1] / vr[0], "<", 0.5)
    half = res.times >= res.times[-1] / 2
    ctx.check("modulation.speed_settles", "spread of c(t) over the second half relative to c",
              np.ptp(res.cs[half, 0]) / res.cs[-1, 0], "<", 1e-2)
    ctx.record("radius_1e-3", modulation.localization_radius(tr, x, 1e-3))
    ctx.record("c_final", float(res.cs[-1, 0]))
    ctx.columns("tails.csv", {"t": tl["times"], "u_right": tl["u_right"], "v_right": vr, "dev_right": tl["dev_right"]})


# -- multisoliton ------------------------------------------------------------


@_register("train-stability", "orbital stability of a perturbed two-soliton train",
           "multisoliton", {"grid": {"n": 4096, "length": 320.0},
                            "physics": {"omega": 1.0, "speeds": [3.0, 5.0], "positions": [-130.0, -100.0],
                                        "epsilon": 0.01},
                            "evolution": {"T": 20.0, "dt": 0.02, "snapshot_stride": 50}})
def _train_stability(ctx):
    g, ph, ev = ctx.section("grid"), ctx.section("physics"), ctx.section("evolution")
    cfg = multisoliton.TrainConfig(speeds=tuple(ph["speeds"]), positions=tuple(ph["positions"]), omega=ph["omega"],
                                   epsilon=ph["epsilon"], seed=ctx.config["seed"], n=g["n"], length=g["length"],
                                   dt=ev["dt"], T=ev["T"], snapshot_stride=ev["snapshot_stride"])
    rep = multisoliton.train_experiment(cfg)
    ctx.check("multisoliton.completed", "1 if the run finished and every snapshot was decomposed",
              float(rep.message in ("ok", "ordering lost")), "==", 1)
    ctx.check("multisoliton.ordered", "1 if speeds and positions stay ordered", float(rep.ordered), "==", 1)
    ctx.check("multisoliton.fitted_A", "A = sup ||v|| / (eps + exp(-gamma0 L0))", rep.fitted_A, "<", 10.0)
    ctx.check("multisoliton.energy_drift", "relative drift of E", rep.energy_drift, "<", 1e-3)
    ctx.record("gamma0", rep.gamma0)
    ctx.record("epsilon_abs", rep.epsilon_abs)
    ctx.record("gap_slopes", rep.gap_slopes)
    sp, xs = np.array(rep.speeds), np.array(rep.positions)
    cols = {"t": rep.times, "distance": rep.distance}
    for j in range(sp.shape[1]):
        cols[f"c{j + 1}"] = sp[:, j]
        cols[f"x{j + 1}"] = xs[:, j]
    ctx.columns("train.csv", cols)


@_register("exact-two-soliton", "parametric N-soliton construction against profiles and superpositions",
           "multisoliton", {"grid": {"n": 4096, "length": 320.0},
                            "physics": {"omega": 1.0, "speeds": [3.0, 5.0], "centers": [-5.0, 5.0], "t_far": 15.0}})
def _exact_two_soliton(ctx):
    from scipy.signal import find_peaks

    ph = ctx.section("physics")
    g = _grid(ctx)
    w = ph["omega"]
    c1 = ph["speeds"][-1]
    one = multisoliton.exact_n_soliton(multisoliton.NSolitonSpec.from_speeds([c1], [0.0], w), 0.0, g)
    ref = soliton.build_profile(c1, w, g, x_peak=0.0)
    ctx.check("multisoliton.one_soliton", "H1 distance of the N=1 construction to the profile",
              h1_norm(one - ref.phi, g), "<", 1e-3)
    spec = multisoliton.NSolitonSpec.from_speeds(ph["speeds"], ph["centers"], w)
    cols = {"x": g.x}
    for sgn, tag in ((-1, "minus"), (1, "plus")):
        u = multisoliton.exact_n_soliton(spec, sgn * ph["t_far"], g)
        pk, _ = find_peaks(u, height=0.1)
        guess = sorted(((u[j] + 2 * w, g.x[j]) for j in pk), key=lambda t: t[1])
        _, d = multisoliton.fit_superposition(u, g, w, guess)
        ctx.check(f"multisoliton.two_soliton_{tag}", f"H1 distance to the fitted superposition at t={sgn * ph['t_far']:g}",
                  d, "<", 5e-3)
        cols[f"u_{tag}"] = u
    ctx.columns("two_soliton.csv", cols)


# -- KdV / mKdV --------------------------------------------------------------

_GK = {"grid": {"n": 512, "length": float(25 * np.pi)}}


def _gkdv_common(ctx, p):
    g = _grid(ctx)
    nu = ctx.section("numerics")
    prof = gkdv.build_Q(p, 1.0, g)
    peak = prof.Q[np.argmin(np.abs(prof.y))]
    ctx.check(f"gkdv.p{p}.peak", "|Q(0) - closed-form peak|", abs(peak - (1.5 if p == 2 else np.sqrt(2))), "<", 1e-12)
    ctx.check(f"gkdv.p{p}.ode", "sup |Q'' + Q^p - Q|", prof.ode_residual(), "<", 1e-10)
    for n in (1, 2):
        r = gkdv.generalized_kernel_residuals(prof, n)
        ctx.check(f"gkdv.p{p}.kernel.n{n}", f"||L_{n} Q'|| / ||Q'||", r["kernel"], "<", 1e-6)
        ctx.check(f"gkdv.p{p}.scaling.n{n}", f"||L_{n}((2/(p-1))Q + xQ') - (-1)^{n} 2Q||", r["scaling"], "<", 1e-5)
        cr = gkdv.commutator_residuals_gkdv(prof, n)
        ctx.check(f"gkdv.p{p}.commutator.n{n}", f"R L_{n} d = L_{n} d R, relative", cr["r1"], "<", 1e-6)
        ctx.check(f"gkdv.p{p}.adjoint_commutator.n{n}", f"R* d L_{n} = d L_{n} R*, relative", cr["r2"], "<", 1e-6)
    # decay of projected data in the weighted frame
    dg = Grid(nu["decay_n"], g.length)
    dprof = gkdv.build_Q(p, 1.0, dg)
    w = np.exp(-((dprof.y / 4) ** 2)) * ctx.rng.standard_normal(dg.n)
    fh = np.fft.rfft(w)
    fh[dg.k > dg.kmax / 4] = 0
    w0 = gkdv.project_out_kernel(p, 1, nu["a"], np.fft.irfft(fh, dg.n), dprof)
    dec = gkdv.liouville_decay_gkdv(p, 1, nu["a"], w0, T=nu["T"], dt=0.5, profile=dprof)
    ctx.check(f"gkdv.p{p}.decay_rate", "fitted weighted decay rate", dec["rate"], "<=", -0.02)
    ctx.record("decay_rate", dec["rate"])
    ks = np.linspace(-nu["kmax"], nu["kmax"], nu["kcount"])
    f = np.exp(-prof.y**2 / 2) * (1 + 0.5 * prof.y)
    dec2 = gkdv.continuum_decomposition(f, prof, ks)
    ctx.check(f"gkdv.p{p}.decomposition", "relative error of the continuum + discrete least-squares expansion",
              dec2["error"], "<", 1e-2)
    ctx.columns("decay.csv", {"t": dec["times"], "h1_norm": dec["norms"]})
    return prof


_GK_NUM = {"a": -0.2, "T": 40.0, "decay_n": 256, "kcount": 256, "kmax": 8.0}


@_register("kdv-toolkit", "KdV soliton, Lenard recursion, Jost solutions and linearized identities",
           "gkdv", {**_GK, "numerics": {**_GK_NUM, "kappa": 1.0}})
def _kdv_toolkit(ctx):
    prof = _gkdv_common(ctx, 2)
    kappa = ctx.section("numerics")["kappa"]
    j = gkdv.jost_kdv(kappa, prof.y)
    ctx.check("gkdv.p2.jost_psi", "sup |psi'' + (2 sech^2 + kappa^2) psi|", j["residual"], "<", 1e-8)
    ctx.check("gkdv.p2.jost_phi", "sup |phi'' + (2 sech^2 + kappa^2) phi|",
              gkdv.jost_kdv(kappa, prof.y, "phi")["residual"], "<", 1e-8)
    ctx.check("gkdv.p2.eigenrelation", "||R F - kappa^2 F|| / ||F|| modulo constants, F = phi^2(x/2)",
              gkdv.kdv_eigen_residual(prof, kappa), "<", 1e-5)
    L1 = gkdv.build_L1_gkdv(prof).matrix
    vals, vecs = np.linalg.eigh(0.5 * (L1 + L1.T))
    v0 = vecs[:, 0]
    ctx.check("gkdv.p2.negative_eigenvalue", "smallest eigenvalue of L1", vals[0], "<", 0)
    ctx.check("gkdv.p2.even_ground_state", "odd part of the ground state of L1",
              np.linalg.norm(v0 - np.roll(v0[::-1], 1)) / (2 * np.linalg.norm(v0)), "<", 1e-8)
    ctx.record("L1_lowest", vals[:3])
    ctx.columns("jost.csv", {"x": prof.y, "psi": j["v"]})


@_register("mkdv-toolkit", "mKdV soliton, Zakharov-Shabat Jost solutions and adjoint recursion relations",
           "gkdv", {**_GK, "numerics": {**_GK_NUM, "zeta": 0.3}})
def _mkdv_toolkit(ctx):
    prof = _gkdv_common(ctx, 3)
    zeta = ctx.section("numerics")["zeta"]
    J = gkdv.jost_zs_mkdv(zeta, prof.y)
    ctx.check("gkdv.p3.zs_residual", "sup ZS residual over phi, phi~, psi, psi~", J["residual"], "<", 1e-8)
    x0 = prof.grid.x[0]
    phi_edge = J["phi"][0][:, 0] * np.exp(1j * zeta * x0)
    ctx.check("gkdv.p3.zs_asymptotics", "|phi e^{i zeta x} - (1, 0)| at the left edge",
              np.max(np.abs(phi_edge - np.array([1, 0]))), "<", 1e-6)
    r = gkdv.mkdv_adjoint_residuals(prof)
    ctx.check("gkdv.p3.adjoint_translation", "||R* Q' + Q'||", r["translation"], "<", 1e-6)
    ctx.check("gkdv.p3.adjoint_scaling", "||R*(Q + xQ') + (Q + xQ') + 2Q'||", r["scaling"], "<", 1e-5)
    v, _ = J["phi"]
    ctx.columns("jost.csv", {"x": prof.y, "phi1": v[0], "phi2": v[1]})
