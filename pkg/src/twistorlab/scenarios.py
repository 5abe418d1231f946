"""Named end-to-end experiments, their configuration and report emission.

A scenario composes the numerical modules, evaluates a fixed list of
assertions (each tied to a named invariant) and writes a JSON report plus
CSV tables and, on request, SVG plots.  Reports in canonical mode carry no
timestamps or runtimes so identical configs give byte-identical files.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .circle import (FourierSeries, circle_map_from_argument,
                     circlediff_rigidity, moebius_ratio_test, rkc_check)
from .errors import ConfigError, NotCircleDiffeo, TwistorLabError
from .flow import (ThermostatField, TimeFunction, angle_distance, chord_scattering,
                   default_grid, scattering, scattering_table, time_change_check, worker_count)
from .geometry import (BoundaryRay, ConformalFactor, ConformalMetric, boundary_length,
                       connection_difference, rescaled_metric)
from .jacobi import (VariationalState, d_alpha_of_V, fd_variation, glancing_identity,
                     variational_flow)
from .twistor import (RANK_THRESHOLD, Composite, holomorphy_residual,
                      intersection_dimension, invariant_extension_check,
                      orbit_equivalence_conditions, parse_map, parse_sm_map,
                      pestov_uhlmann_euclid, pestov_uhlmann_oneform_euclid,
                      random_twistor_points)


class ScenarioError(TwistorLabError):
    """A numerical error raised inside a scenario, annotated with its id."""


_CONFIG_KEYS = {"scenario", "metric", "lambda", "grid", "tol", "seed", "out", "canonical",
                "plots", "params"}


@dataclass
class ScenarioConfig:
    """Configuration of one scenario run.

    ``metric`` is a list of metric specs (a single string is accepted),
    ``grid`` is ``(n_beta, n_gamma)`` and ``params`` holds scenario specific
    settings such as documented gap thresholds.  Unset fields take the
    scenario defaults from :data:`REGISTRY`.
    """

    scenario: str
    metric: list[str] | None = None
    lam: str | None = None
    grid: tuple[int, int] | None = None
    tol: float | None = None
    seed: int = 0
    out: str | None = None
    canonical: bool = False
    plots: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in REGISTRY:
            raise ConfigError(f"unknown scenario {self.scenario!r}; known: {', '.join(REGISTRY)}")
        if isinstance(self.metric, str):
            self.metric = [self.metric]
        if self.grid is not None:
            g = tuple(int(n) for n in self.grid)
            if len(g) != 2 or min(g) < 1:
                raise ConfigError(f"grid must be two positive integers, got {self.grid!r}")
            self.grid = g
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tol must be positive")
        unknown = set(self.params) - set(REGISTRY[self.scenario].params)
        if unknown:
            raise ConfigError(f"unknown params for {self.scenario}: {sorted(unknown)}")
        # parse specs now so bad presets fail at load time
        for spec in self.metric or []:
            ConformalMetric.parse(spec)
        if self.lam is not None:
            ThermostatField.parse("zero", self.lam)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        unknown = set(d) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "scenario" not in d:
            raise ConfigError("config needs a 'scenario' key")
        kw = {k: v for k, v in d.items() if k != "lambda"}
        if "lambda" in d:
            kw["lam"] = d["lambda"]
        return cls(**kw)

    @classmethod
    def from_json(cls, source) -> "ScenarioConfig":
        text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) or (
            isinstance(source, str) and not source.lstrip().startswith("{")) else source
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None

    def resolved(self) -> "ScenarioConfig":
        """Copy with scenario defaults filled in."""
        spec = REGISTRY[self.scenario]
        c = copy.deepcopy(self)
        c.metric = c.metric or list(spec.metric)
        c.lam = c.lam or spec.lam
        c.grid = c.grid or spec.grid
        c.tol = c.tol if c.tol is not None else spec.tol
        c.params = {**spec.params, **c.params}
        return c

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "metric": self.metric, "lambda": self.lam,
                "grid": list(self.grid) if self.grid else None, "tol": self.tol,
                "seed": self.seed, "out": self.out, "canonical": self.canonical,
                "plots": self.plots, "params": self.params}


@dataclass
class Assertion:
    name: str
    invariant: str
    value: float
    threshold: float
    comparison: str  # "<" or ">"

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value < self.threshold if self.comparison == "<" else self.value > self.threshold

    def to_dict(self) -> dict:
        return {"name": self.name, "invariant": self.invariant, "value": _clean(self.value),
                "threshold": self.threshold, "comparison": self.comparison,
                "passed": self.passed}


@dataclass
class ScenarioReport:
    scenario: str
    assertions: list[Assertion]
    metrics: dict
    tables: list[str]
    plots: list[str]
    provenance: dict
    runtime: float | None = None
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(a.passed for a in self.assertions)

    @property
    def max_residuals(self) -> dict:
        return {a.name: _clean(a.value) for a in self.assertions if a.comparison == "<"}

    def to_dict(self) -> dict:
        d = {"scenario": self.scenario, "description": REGISTRY[self.scenario].description,
             "passed": self.passed, "assertions": [a.to_dict() for a in self.assertions],
             "max_residuals": self.max_residuals, "metrics": _clean(self.metrics),
             "tables": self.tables, "plots": self.plots, "provenance": self.provenance}
        if self.error is not None:
            d["error"] = self.error
        if self.runtime is not None:
            d["runtime_s"] = self.runtime
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def version_string() -> str:
    """Package version with the short git commit when available."""
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+g{rev}" if rev else __version__


class _Context:
    """Mutable state handed to a scenario body."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.p = cfg.params
        self.rng = np.random.default_rng(cfg.seed)
        self.assertions: list[Assertion] = []
        self.metrics: dict = {}
        self.tables: dict[str, tuple[list[str], list[list]]] = {}
        self.heatmaps: dict[str, tuple[np.ndarray, str]] = {}

    def less(self, name, invariant, value, threshold):
        self.assertions.append(Assertion(name, invariant, float(value), float(threshold), "<"))

    def greater(self, name, invariant, value, threshold):
        self.assertions.append(Assertion(name, invariant, float(value), float(threshold), ">"))

    def table(self, name, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])

    def heatmap(self, name, arr, title):
        self.heatmaps[name] = (np.asarray(arr, dtype=float), title)


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    description: str
    body: Callable[[_Context], None]
    metric: tuple[str, ...] = ("zero",)
    lam: str = "zero"
    grid: tuple[int, int] = (16, 16)
    tol: float = 1e-8
    params: dict = field(default_factory=dict)


REGISTRY: dict[str, ScenarioSpec] = {}


def _register(id, description, **defaults):
    def deco(fn):
        REGISTRY[id] = ScenarioSpec(id, description, fn, **defaults)
        return fn
    return deco


def _scattering_deviation(tab, ref_beta, ref_gamma):
    return np.maximum(angle_distance(tab.beta_out, ref_beta), angle_distance(tab.gamma_out, ref_gamma))


def _table_rows(tab, extra: dict | None = None):
    rows = list(tab.rows())
    if extra:
        flat = {k: np.ravel(v) for k, v in extra.items()}
        rows = [list(r) + [float(flat[k][i]) for k in flat] for i, r in enumerate(rows)]
    return rows


# ---------------------------------------------------------------- scenarios

ScatteringTableColumns = ("beta", "gamma", "beta_out", "gamma_out", "tau_tilde", "status")

@_register("scattering-involution", "alpha o alpha = Id for geodesic flows on the table grid",
           metric=("zero", "linreal:0.1", "bump:0.3:0.5"), grid=(24, 24), tol=1e-6)
def _involution(ctx: _Context):
    nb, ng = ctx.cfg.grid
    worst_all = 0.0
    for spec in ctx.cfg.metric:
        F = ThermostatField.parse(spec, "zero")
        tab = scattering_table(F, nb, ng)
        dev = np.zeros(tab.shape)
        for idx in np.ndindex(tab.shape):
            back = scattering(F, BoundaryRay(tab.beta_out[idx], tab.gamma_out[idx])).ray
            dev[idx] = max(angle_distance(back.beta, tab.beta[idx[0]]),
                           angle_distance(back.gamma, tab.gamma[idx[1]]))
        worst = float(np.max(dev))
        worst_all = max(worst_all, worst)
        ctx.less(f"involution[{spec}]", "flow: alpha o alpha = Id for lambda = 0", worst, ctx.cfg.tol)
        ctx.table(f"scattering-{spec}", ScatteringTableColumns + ("involution_dev",),
                  _table_rows(tab, {"dev": dev}))
        ctx.heatmap(f"involution-{spec}", np.log10(dev + 1e-18), f"log10 |alpha^2 - Id|, {spec}")
    ctx.metrics["max_deviation"] = worst_all


@_register("euclid-chord", "Euclidean scattering table against the closed-form chord oracle",
           grid=(64, 64), tol=1e-8)
def _chord(ctx: _Context):
    nb, ng = ctx.cfg.grid
    tab = scattering_table(ThermostatField(ConformalMetric()), nb, ng)
    B, G = np.meshgrid(tab.beta, tab.gamma, indexing="ij")
    ref_b, ref_g, ref_t = np.empty(tab.shape), np.empty(tab.shape), np.empty(tab.shape)
    for idx in np.ndindex(tab.shape):
        ray, tau = chord_scattering(BoundaryRay(B[idx], G[idx]))
        ref_b[idx], ref_g[idx], ref_t[idx] = ray.beta, ray.gamma, tau
    ang = _scattering_deviation(tab, ref_b, ref_g)
    dt = np.abs(tab.tau_tilde - ref_t)
    ctx.less("exit_ray", "flow: Euclidean table matches chord formula", float(np.max(ang)), ctx.cfg.tol)
    ctx.less("tau_tilde", "flow: Euclidean table matches chord formula", float(np.max(dt)), ctx.cfg.tol)
    ctx.less("tau_equals_2_sin_gamma", "flow: Euclidean table matches chord formula",
             float(np.max(np.abs(tab.tau_tilde - 2 * np.sin(G)))), ctx.cfg.tol)
    ctx.table("scattering", ScatteringTableColumns + ("angle_error", "tau_error"),
              _table_rows(tab, {"a": ang, "t": dt}))
    ctx.heatmap("chord-error", np.log10(np.maximum(ang, dt) + 1e-18), "log10 error vs chord oracle")


@_register("glancing-identity", "Pi^lambda V(tau~) = +-2 at the glancing set by extrapolation",
           metric=("zero", "const:0.2", "bump:0.3:0.5"), lam="zero", grid=(4, 1), tol=1e-2,
           params={"thermostats": ["zero|const:0.3", "zero|conformal:linreal:0.1"],
                   "gamma0": 0.1, "levels": 5})
def _glancing(ctx: _Context):
    pairs = [(m, ctx.cfg.lam) for m in ctx.cfg.metric]
    pairs += [tuple(s.split("|", 1)) for s in ctx.p["thermostats"]]
    betas, _ = default_grid(ctx.cfg.grid[0], 1)
    rows = []
    for metric, lam in pairs:
        F = ThermostatField.parse(metric, lam)
        worst = 0.0
        for b in betas:
            for side in (0, 1):
                r = glancing_identity(F, float(b), side, ctx.p["gamma0"], ctx.p["levels"])
                worst = max(worst, r.residual)
                rows.append([metric, lam, r.beta, side, r.pi_lambda, r.v_tau, r.product, r.residual])
        ctx.less(f"glancing[{metric}|{lam}]", "jacobi: glancing identity residual < 1e-2",
                 worst, ctx.cfg.tol)
    ctx.table("glancing", ["metric", "lambda", "beta", "side", "pi_lambda", "v_tau", "product",
                           "residual"], rows)


@_register("jacobi-fd", "variational ODE against finite differences of the flow map",
           metric=("zero", "bump:0.3:0.5", "linreal:0.1"), lam="const:0.2", tol=1e-4,
           params={"cases": 100, "flat_tol": 1e-10, "fd_step": 1e-4})
def _jacobi(ctx: _Context):
    rows, worst = [], 0.0
    for i in range(ctx.p["cases"]):
        metric = ctx.cfg.metric[i % len(ctx.cfg.metric)]
        F = ThermostatField.parse(metric, ctx.cfg.lam)
        r = 0.5 * math.sqrt(ctx.rng.uniform())
        phi, th = ctx.rng.uniform(0, 2 * math.pi, 2)
        p0 = np.array([r * math.cos(phi), r * math.sin(phi), th])
        xi0 = VariationalState(*ctx.rng.normal(size=3))
        T = float(ctx.rng.uniform(0.2, 0.6))
        ode = variational_flow(F, p0, xi0, T).at(T)[1].array
        fd = fd_variation(F, p0, xi0, T, ctx.p["fd_step"]).array
        rel = float(np.linalg.norm(ode - fd) / np.linalg.norm(fd))
        worst = max(worst, rel)
        rows.append([metric, *p0, *xi0.array, T, *ode, *fd, rel])
    ctx.less("relative_error", "jacobi: variational flow vs FD relative error < 1e-4",
             worst, ctx.cfg.tol)
    tr = variational_flow(ThermostatField(ConformalMetric()), np.array([0.1, -0.2, 0.4]),
                          VariationalState.vertical(), T=1.5)
    flat = 0.0
    for t in np.linspace(0.0, 1.5, 7):
        st = tr.at(t)[1]
        flat = max(flat, abs(st.a), abs(st.b - t), abs(st.c - 1))
    ctx.less("flat_b_equals_t", "jacobi: flat case b(t) = t", flat, ctx.p["flat_tol"])
    ctx.table("cases", ["metric", "x1", "x2", "theta", "a0", "b0", "c0", "T", "a_ode", "b_ode",
                        "c_ode", "a_fd", "b_fd", "c_fd", "relative_error"], rows)


@_register("boundary-determination",
           "thermostat with lambda from sigma' has scattering distinct from lambda = 0 unless dsigma' = 0",
           metric=("zero",), grid=(16, 16), tol=1e-6,
           params={"sigma_prime": "linreal:0.1", "sigma_prime_null": "const:0.5", "gap": 1e-3})
def _boundary_determination(ctx: _Context):
    nb, ng = ctx.cfg.grid
    metric = ctx.cfg.metric[0]
    ref = scattering_table(ThermostatField.parse(metric, "zero"), nb, ng)

    def gap(sig):
        tab = scattering_table(ThermostatField.parse(metric, f"conformal:{sig}"), nb, ng)
        return tab, _scattering_deviation(tab, ref.beta_out, ref.gamma_out)

    tab, dev = gap(ctx.p["sigma_prime"])
    _, dev0 = gap(ctx.p["sigma_prime_null"])
    ctx.greater("gap", "scenarios: documented gap threshold 1e-3", float(np.max(dev)), ctx.p["gap"])
    ctx.less("null_agreement", "flow: lambda = 0 reproduces alpha_0", float(np.max(dev0)), ctx.cfg.tol)
    ctx.table("thermostat", ScatteringTableColumns + ("gap",), _table_rows(tab, {"g": dev}))
    ctx.heatmap("gap", dev, f"|alpha_lambda - alpha_0|, sigma' = {ctx.p['sigma_prime']}")


@_register("dalpha-identities", "f_lambda and g_lambda from the variational ODE and by differentiating alpha",
           metric=("zero", "bump:0.3:0.5"), lam="conformal:linreal:0.1", grid=(6, 6), tol=1e-3,
           params={"euclid_tol": 1e-4})
def _dalpha(ctx: _Context):
    rows = []
    nb, ng = ctx.cfg.grid
    betas, gammas = default_grid(nb, ng)
    cases = [("zero", "zero", ctx.p["euclid_tol"])]
    cases += [(m, ctx.cfg.lam, ctx.cfg.tol) for m in ctx.cfg.metric]
    for metric, lam, tol in cases:
        F = ThermostatField.parse(metric, lam)
        worst = 0.0
        for b in betas:
            for g in gammas:
                r = d_alpha_of_V(F, BoundaryRay(float(b), float(g)))
                if r.degraded:
                    continue
                d = max(r.discrepancy, abs(r.v_formula - r.v_direct))
                worst = max(worst, d)
                rows.append([metric, lam, b, g, r.tau_tilde, r.f_formula, r.f_direct,
                             r.g_formula, r.g_direct, r.v_formula, r.v_direct, d])
        ctx.less(f"discrepancy[{metric}|{lam}]", "jacobi: f/g cross-check away from glancing",
                 worst, tol)
    ctx.table("dalpha", ["metric", "lambda", "beta", "gamma", "tau_tilde", "f_formula", "f_direct",
                         "g_formula", "g_direct", "v_formula", "v_direct", "discrepancy"], rows)


@_register("conformal-conjugation",
           "scattering of exp(2 sigma) g equals the thermostat alpha_lambda with lambda = -*dsigma",
           metric=("zero",), grid=(32, 32), tol=1e-5,
           params={"sigma": "bump:0.3:0.5", "exponents": [2.0, 1.0], "gap": 1e-3})
def _conjugation(ctx: _Context):
    nb, ng = ctx.cfg.grid
    base = ConformalMetric.parse(ctx.cfg.metric[0])
    sigma = ConformalFactor.parse(ctx.p["sigma"])
    # lam = -*dsigma; adding lam of the base metric keeps general base metrics valid
    thermo = scattering_table(ThermostatField(base, _conformal_lambda(sigma)), nb, ng)
    devs = {}
    for e in ctx.p["exponents"]:
        m = rescaled_metric(base, sigma, e)
        # sc_sigma is the identity in (x, theta) coordinates, so conjugation acts trivially
        tab = scattering_table(ThermostatField(m), nb, ng)
        dev = _scattering_deviation(tab, thermo.beta_out, thermo.gamma_out)
        devs[e] = float(np.max(dev))
        ctx.heatmap(f"conjugation-exp{e:g}", np.log10(dev + 1e-18),
                    f"log10 |sc^-1 alpha sc - alpha_lambda|, exp({e:g} sigma)")
    validated = [e for e, d in devs.items() if d < ctx.cfg.tol]
    ctx.metrics["deviation_by_exponent"] = {f"{e:g}": d for e, d in devs.items()}
    ctx.metrics["validated_exponent"] = validated[0] if len(validated) == 1 else validated
    ctx.less("conjugation[exp(2 sigma)]", "scenarios: conformal conjugation to 1e-5",
             devs.get(2.0, math.nan), ctx.cfg.tol)
    for e in devs:
        if e != 2.0:
            ctx.greater(f"gap[exp({e:g} sigma)]", "scenarios: documented gap threshold 1e-3",
                        devs[e], ctx.p["gap"])
    ctx.table("thermostat", ScatteringTableColumns, _table_rows(thermo))


def _conformal_lambda(sigma: ConformalFactor):
    from .flow import LambdaField
    return LambdaField("conformal", sigma=sigma)


@_register("time-change", "dphi_tau(X) = (1 + X tau) X and the defect of tau-time changes",
           metric=("zero", "bump:0.3:0.5"), tol=1e-4,
           params={"taus": ["zero", "quad:0.01", "quad:0.05", "quadcos:0.05"], "probes": 100,
                   "radius": 0.8, "gap": 1e-4, "fd_step": 1e-4})
def _time_change(ctx: _Context):
    rows = []
    worst_factor, worst_transverse = 0.0, 0.0
    n = ctx.p["probes"]
    r = ctx.p["radius"] * np.sqrt(ctx.rng.uniform(size=n))
    ph, th = ctx.rng.uniform(0, 2 * math.pi, (2, n))
    probes = np.column_stack([r * np.cos(ph), r * np.sin(ph), th])
    for spec in ctx.cfg.metric:
        m = ConformalMetric.parse(spec)
        for tname in ctx.p["taus"]:
            tau = TimeFunction.parse(tname)
            defect = 0.0
            for y in probes:
                rep = time_change_check(m, tau, y, ctx.p["fd_step"])
                worst_factor = max(worst_factor, rep.factor_residual)
                worst_transverse = max(worst_transverse, rep.transverse_residual)
                defect = max(defect, abs(rep.x_component - 1.0) + rep.transverse_residual)
                rows.append([spec, tname, *y, rep.x_component, rep.one_plus_x_tau,
                             rep.factor_residual, rep.transverse_residual])
            if tau.kind == "zero" or tau.s == 0:
                ctx.less(f"defect[{spec}|{tname}]", "flow: zero time change is the identity",
                         defect, ctx.cfg.tol)
            else:
                ctx.greater(f"defect[{spec}|{tname}]", "scenarios: documented gap threshold 1e-4",
                            defect, ctx.p["gap"])
    ctx.less("one_over_q", "flow: 1/q = 1 + X tau", worst_factor, ctx.cfg.tol)
    ctx.less("orbit_preserving", "flow: dphi(X) has no H, V components", worst_transverse, ctx.cfg.tol)
    ctx.table("probes", ["metric", "tau", "x1", "x2", "theta", "x_component", "one_plus_x_tau",
                         "factor_residual", "transverse_residual"], rows)


def _circle_candidates():
    blaschke = lambda a: (lambda mu: (mu - a) / (1 - np.conj(a) * mu))
    rot = lambda w: (lambda mu: np.exp(1j * w) * mu)
    return [
        ("identity", circle_map_from_argument(lambda t: t), []),
        ("rotation pi/3", FourierSeries.from_function(rot(math.pi / 3)), ["fixes_one"]),
        ("blaschke 0.3", FourierSeries.from_function(blaschke(0.3)), ["odd"]),
        ("blaschke -0.5", FourierSeries.from_function(blaschke(-0.5)), ["odd"]),
        ("t + 0.3 sin 2t", circle_map_from_argument(lambda t: t + 0.3 * np.sin(2 * t)), ["hardy"]),
        ("t + 0.15 sin 6t", circle_map_from_argument(lambda t: t + 0.15 * np.sin(6 * t)), ["hardy"]),
    ]


@_register("rkc-suite", "circle rigidity hypotheses and harmonic extension of circle diffeomorphisms",
           tol=1e-8, params={"rkc_grid": 64})
def _rkc(ctx: _Context):
    rows, misses = [], 0
    for name, psi, expect in _circle_candidates():
        v = circlediff_rigidity(psi, ctx.cfg.tol)
        ok = v.failed == expect and (bool(expect) or v.is_identity is True)
        misses += not ok
        try:
            rk = rkc_check(psi, ctx.p["rkc_grid"], ctx.p["rkc_grid"])
            diffeo, jmin = rk.is_diffeo_on_disk, rk.min_jacobian
        except NotCircleDiffeo:
            diffeo, jmin = False, math.nan
        if not diffeo:
            misses += 1
        rows.append([name, ";".join(expect) or "-", ";".join(v.failed) or "-",
                     v.is_identity, diffeo, jmin, ok])
    ctx.less("misclassified", "circle: each candidate fails exactly its broken hypothesis",
             misses, 0.5)
    ctx.table("candidates", ["candidate", "expected_failures", "failures", "is_identity",
                             "rkc_diffeo", "min_jacobian", "ok"], rows)


@_register("moebius-rigidity", "(a mu + b conj mu)/|.| is fibrewise holomorphic iff b = 0",
           tol=1e-8, params={"draws": 1000, "zero_fraction": 0.2, "ambiguous": 1e-6})
def _moebius(ctx: _Context):
    rows, wrong = [], 0
    n = ctx.p["draws"]
    for i in range(n):
        a = complex(*ctx.rng.normal(size=2))
        u = ctx.rng.uniform()
        if u < ctx.p["zero_fraction"]:
            b = 0j
        else:
            # log-uniform |b| from 1e-7 |a| to 0.9 |a| plus a band beyond |a|
            scale = 10 ** ctx.rng.uniform(-7, math.log10(0.9))
            if ctx.rng.uniform() < 0.15:
                scale = ctx.rng.uniform(1.1, 3.0)
            b = abs(a) * scale * complex(np.exp(1j * ctx.rng.uniform(0, 2 * math.pi)))
        rep = moebius_ratio_test(a, b, ctx.cfg.tol)
        expected = b == 0
        counted = abs(b) >= ctx.p["ambiguous"] or b == 0
        miss = counted and rep.extendable != expected
        wrong += miss
        rows.append([a.real, a.imag, b.real, b.imag, rep.max_negative, rep.extendable, rep.n, miss])
    ctx.less("misclassified", "circle: extendable iff b = 0 outside |b| < 1e-6", wrong, 0.5)
    ctx.metrics["draws"] = n
    ctx.metrics["extendable"] = sum(bool(r[5]) for r in rows)
    ctx.table("sweep", ["a_re", "a_im", "b_re", "b_im", "max_negative", "extendable", "n",
                        "misclassified"], rows)


@_register("twistor-catalog", "holomorphy residuals of catalog maps and necessary conditions on SM",
           tol=1e-8, params={
               "maps": ["id", "shear:0.3", "shear:0.7", "shear:2.0", "antipodal", "rot:0.5",
                        "rot:2.1", "trans:0.3:-1.0", "trans:-2.0:0.5", "scale:0.5", "scale:2.5",
                        "shear:0.7,rot:1.0,antipodal"],
               "non_examples": ["badshear:0.5"], "points": 1000, "gap": 1e-2,
               "sm_maps": ["rot:0.4", "antipodal"], "sm_probes": 20, "jacobian_tol": 1e-6})
def _catalog(ctx: _Context):
    pts = random_twistor_points(ctx.rng, ctx.p["points"])
    rows = []
    worst_bi, worst_jac, worst_group = 0.0, 0.0, 0.0
    for spec in ctx.p["maps"]:
        M = parse_map(spec)
        res = max(holomorphy_residual(M, p) for p in pts)
        jac = max(float(np.max(np.abs(M.jacobian(p) - M.fd_jacobian(p)))) for p in pts[:50])
        grp = max(holomorphy_residual(Composite([M, M.inverse()]), p) for p in pts[:50])
        worst_bi, worst_jac, worst_group = max(worst_bi, res), max(worst_jac, jac), max(worst_group, grp)
        rows.append([spec, "biholomorphism", res, jac, grp])
    ctx.less("biholomorphisms", "twistor: catalog residual < 1e-8", worst_bi, ctx.cfg.tol)
    ctx.less("jacobians", "twistor: catalog Jacobians match FD to 1e-6", worst_jac, ctx.p["jacobian_tol"])
    ctx.less("group", "twistor: Composite(Phi, Phi^-1) residual 0", worst_group, 1e-10)
    for spec in ctx.p["non_examples"]:
        M = parse_map(spec)
        res = max(holomorphy_residual(M, p) for p in pts)
        rows.append([spec, "non-example", res, math.nan, math.nan])
        ctx.greater(f"non_example[{spec}]", "twistor: non-example residual > 1e-2", res, ctx.p["gap"])
    # rank of D cap conj(D)
    rank_bad = 0
    for p in pts:
        dim = intersection_dimension(p, RANK_THRESHOLD)
        if p.on_sm:
            rank_bad += dim != 1
        elif abs(p.mu) < 1 - 1e-3:
            rank_bad += dim != 0
    ctx.less("rank_structure", "twistor: dim(D cap conj D) is 1 on SM and 0 inside", rank_bad, 0.5)
    ctx.metrics["rank_threshold"] = RANK_THRESHOLD
    # necessary conditions for SM maps
    e = ConformalMetric()
    n = ctx.p["sm_probes"]
    r = 0.8 * np.sqrt(ctx.rng.uniform(size=n))
    ph, th = ctx.rng.uniform(0, 2 * math.pi, (2, n))
    probes = list(np.column_stack([r * np.cos(ph), r * np.sin(ph), th]))
    for spec in ctx.p["sm_maps"]:
        reps = orbit_equivalence_conditions(e, e, parse_sm_map(spec, e), probes)
        worst = max(max(q.x_transverse, q.v_horizontal) for q in reps)
        signs = sorted({q.x_sign for q in reps})
        ctx.metrics[f"x_sign[{spec}]"] = signs
        ctx.less(f"orbit_conditions[{spec}]", "twistor: isometry lifts satisfy the SM conditions",
                 worst, ctx.cfg.tol)
        rows.append([f"sm:{spec}", "sm-map", worst, math.nan, math.nan])
    sig = ConformalFactor.parse("linreal:0.3")
    reps = orbit_equivalence_conditions(e, rescaled_metric(e, sig), parse_sm_map("sc"), probes)
    worst = max(q.x_transverse for q in reps)
    ctx.greater("orbit_conditions[sc linreal:0.3]", "twistor: sc_sigma violates phi_*X in R X'",
                worst, 1e-3)
    rows.append(["sm:sc:linreal:0.3", "sm-non-example", worst, math.nan, math.nan])
    ctx.table("catalog", ["map", "class", "max_residual", "jacobian_error", "group_residual"], rows)


@_register("invariant-extension",
           "Euclidean Pestov-Uhlmann closed forms and fibrewise holomorphy of transported data",
           tol=1e-8, params={"probes": 10, "fiber_n": 32, "gap": 1e-2, "closed_form_tol": 1e-12,
                             "points": 200})
def _invariant_extension(ctx: _Context):
    pts = random_twistor_points(ctx.rng, ctx.p["points"])
    forms = {f"h=z^{k}": pestov_uhlmann_euclid([0] * k + [1]) for k in range(3)}
    forms.update({f"a=z^{k}": pestov_uhlmann_oneform_euclid([0] * k + [1]) for k in range(2)})
    rows = []
    worst = 0.0
    for name, f in forms.items():
        w = max(f.dbar_residual(p.z, p.mu) for p in pts)
        worst = max(worst, w)
        rows.append([name, "closed-form", w])
    ctx.less("annihilation", "twistor: (d/dzbar + mu^2 d/dz) f = 0 analytically", worst,
             ctx.p["closed_form_tol"])
    odd = max(abs(f(p.z, -p.mu) + f(p.z, p.mu)) for name, f in forms.items() if name[0] == "a"
              for p in pts)
    ctx.less("oneform_odd", "twistor: f o a = -f for 1-form extensions", odd, 1e-300)
    n = ctx.p["probes"]
    r = 0.8 * np.sqrt(ctx.rng.uniform(size=n))
    ph = ctx.rng.uniform(0, 2 * math.pi, n)
    probes = [complex(rr * math.cos(p), rr * math.sin(p)) for rr, p in zip(r, ph)]
    m = ConformalMetric()
    data = {"f1=mu": pestov_uhlmann_oneform_euclid([1]),
            "f2=z-mu^2 conj z": pestov_uhlmann_euclid([0, 1])}
    for name, f in data.items():
        reps = invariant_extension_check(m, f, probes, ctx.p["fiber_n"], ctx.cfg.tol)
        neg = max(q.relative_negative for q in reps)
        drift = max(q.transport_residual for q in reps)
        ctx.less(f"negative_modes[{name}]", "twistor: transported data is fibrewise holomorphic",
                 neg, ctx.cfg.tol)
        ctx.less(f"transport[{name}]", "twistor: X(u) = 0 along orbits", drift, 1e-6)
        rows += [[name, f"probe {q.probe.real:.6f}{q.probe.imag:+.6f}i",
                  q.relative_negative] for q in reps]
        ctx.metrics[f"modes[{name}]"] = sorted({k for q in reps for k in q.dominant_modes})
    reps = invariant_extension_check(m, lambda z, mu: np.conj(z), probes, ctx.p["fiber_n"], ctx.cfg.tol)
    neg = max(q.relative_negative for q in reps)
    ctx.greater("control[conj z]", "twistor: non-holomorphic control has negative modes > 1e-2",
                neg, ctx.p["gap"])
    rows += [["control conj z", f"probe {q.probe.real:.6f}{q.probe.imag:+.6f}i",
              q.relative_negative] for q in reps]
    ctx.table("residuals", ["datum", "where", "residual"], rows)


@_register("connection-difference", "Levi-Civita connection difference of conformal metrics in closed form",
           tol=1e-8, params={"samples": 1000})
def _connection(ctx: _Context):
    rows, worst = [], 0.0
    rng = ctx.rng

    def random_sigma():
        kind = rng.integers(5)
        if kind == 0:
            return ConformalFactor("const", (rng.normal(),))
        if kind == 1:
            return ConformalFactor("linreal", (rng.normal(),))
        if kind == 2:
            return ConformalFactor("bump", (rng.normal(), rng.uniform(0.2, 1.0)))
        if kind == 3:
            return ConformalFactor("constcurv", (rng.uniform(-2, 2),))
        return ConformalFactor("poly", tuple(0.3 * rng.normal(size=15)))

    for _ in range(ctx.p["samples"]):
        s1, s2 = random_sigma(), random_sigma()
        r = 0.95 * math.sqrt(rng.uniform())
        ph = rng.uniform(0, 2 * math.pi)
        x = np.array([r * math.cos(ph), r * math.sin(ph)])
        xi = rng.normal(size=2)
        cd = connection_difference(ConformalMetric(s1), ConformalMetric(s2), x, xi)
        scale = max(1.0, float(np.max(np.abs(cd.christoffel))))
        d = cd.difference / scale
        worst = max(worst, d)
        rows.append([s1.spec, s2.spec, *x, *xi, *cd.christoffel, *cd.closed_form, d])
    ctx.less("closed_form", "geometry: connection difference formulas agree", worst, ctx.cfg.tol)
    same = connection_difference(ConformalMetric.parse("bump:0.3:0.5"),
                                 ConformalMetric.parse("bump:0.3:0.5"), np.array([0.2, 0.1]),
                                 np.array([1.0, 0.5]))
    ctx.less("equal_metrics", "geometry: sigma1 = sigma2 gives zero",
             float(np.max(np.abs(same.closed_form))), 1e-15)
    ctx.metrics["boundary_length"] = {spec: boundary_length(ConformalMetric.parse(spec))
                                      for spec in ctx.cfg.metric + ["const:0.5", "bump:0.3:0.5"]}
    ctx.table("samples", ["sigma1", "sigma2", "x1", "x2", "xi1", "xi2", "chris1", "chris2",
                          "closed1", "closed2", "relative_difference"], rows)


# ---------------------------------------------------------------- running

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_svg(path: Path, arr: np.ndarray, title: str):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "twistorlab"
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(arr.T, origin="lower", aspect="auto", extent=(0, 2 * math.pi, 0, math.pi))
    ax.set_xlabel("beta")
    ax.set_ylabel("gamma")
    ax.set_title(title, fontsize=9)
    fig.colorbar(im, ax=ax)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    """Run one registered scenario and write its report.

    Files go to ``cfg.out`` (default ``twistorlab-out/<scenario>``): ``report.json``,
    one CSV per table and, with ``cfg.plots``, one SVG per heat map.

    Raises
    ------
    ScenarioError
        A numerical error inside the scenario, with the scenario id prepended.
    """
    rc = cfg.resolved()
    ctx = _Context(rc)
    t0 = time.perf_counter()
    try:
        REGISTRY[rc.scenario].body(ctx)
    except ConfigError:
        raise
    except (TwistorLabError, FloatingPointError, ArithmeticError) as exc:
        raise ScenarioError(f"[{rc.scenario}] {type(exc).__name__}: {exc}") from exc
    runtime = time.perf_counter() - t0
    out = Path(rc.out or Path("twistorlab-out") / rc.scenario)
    out.mkdir(parents=True, exist_ok=True)
    tables = []
    for name, (header, rows) in ctx.tables.items():
        fname = f"{_slug(name)}.csv"
        _write_csv(out / fname, header, rows)
        tables.append(fname)
    plots = []
    if rc.plots:
        for name, (arr, title) in ctx.heatmaps.items():
            fname = f"{_slug(name)}.svg"
            _write_svg(out / fname, arr, title)
            plots.append(fname)
    echo = rc.to_dict()
    prov = {"config": echo, "version": version_string()}
    if rc.canonical:
        echo["out"] = None  # output location is not an input of the computation
    else:
        prov["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    report = ScenarioReport(rc.scenario, ctx.assertions, ctx.metrics, tables, plots, prov,
                            None if rc.canonical else runtime)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    return report


def default_suite_dir() -> Path:
    """Directory of the shipped default suite configs."""
    return Path(str(resources.files("twistorlab") / "suite"))


def _run_config(args):
    path, out_root, canonical = args
    name = Path(path).stem
    try:
        cfg = ScenarioConfig.from_json(Path(path))
        cfg.out = str(Path(out_root) / name)
        cfg.canonical = cfg.canonical or canonical
        rep = run_scenario(cfg)
        worst = max((a.value for a in rep.assertions if a.comparison == "<"), default=0.0)
        return {"config": name, "scenario": cfg.scenario, "passed": rep.passed,
                "assertions": len(rep.assertions),
                "failed": [a.name for a in rep.assertions if not a.passed],
                "max_residual": _clean(worst), "error": None}
    except TwistorLabError as exc:
        return {"config": name, "scenario": None, "passed": False, "assertions": 0,
                "failed": [], "max_residual": None, "error": f"{type(exc).__name__}: {exc}"}


def run_all(cfg_dir, out_dir=None, *, canonical: bool = False, workers: int | None = None,
            echo: Callable[[str], None] | None = print) -> int:
    """Run every ``*.json`` config in ``cfg_dir``; return 0 iff all pass.

    Failures and errors are collected, never short-circuited.  The aggregate
    table is printed through ``echo`` and saved as ``summary.json`` and
    ``summary.csv`` under ``out_dir`` (default ``<cfg_dir>/../twistorlab-out``).
    """
    cfg_dir = Path(cfg_dir)
    if not cfg_dir.is_dir():
        raise ConfigError(f"{cfg_dir} is not a directory")
    paths = sorted(str(p) for p in cfg_dir.glob("*.json"))
    out_root = Path(out_dir) if out_dir else Path("twistorlab-out")
    workers = worker_count() if workers is None else workers
    tasks = [(p, str(out_root), canonical) for p in paths]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_config, tasks))
    else:
        results = [_run_config(t) for t in tasks]
    if results or out_dir:
        out_root.mkdir(parents=True, exist_ok=True)
        (out_root / "summary.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n",
                                               encoding="utf-8")
        _write_csv(out_root / "summary.csv", ["config", "scenario", "passed", "max_residual", "error"],
                   [[r["config"], r["scenario"], r["passed"], r["max_residual"], r["error"] or ""]
                    for r in results])
    if echo:
        for r in results:
            status = "PASS" if r["passed"] else "FAIL"
            detail = r["error"] or ", ".join(r["failed"])
            echo(f"{status}  {r['config']:<28} {r['scenario'] or '-':<24} {detail}")
        echo(f"{sum(r['passed'] for r in results)}/{len(results)} passed")
    return 0 if all(r["passed"] for r in results) else 1
