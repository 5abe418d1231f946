"""Geodesic and thermostat flows ``F = X + lam V`` with boundary exit detection.

Orbits are integrated with the 8th order Dormand-Prince pair from scipy
(``DOP853``) stepped directly with dense output; the exit time is the first root of
``|x(t)|^2 - 1`` polished by Newton iteration on the dense interpolant.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import DOP853, OdeSolution, solve_ivp
from scipy.optimize import brentq

from .errors import ConfigError, NonTransversalExit, StepLimitExceeded, Trapped, TwistorLabError
from .geometry import (BoundaryRay, ConformalFactor, ConformalMetric, PhasePoint,
                       frame_vectors, wrap_angle)

RTOL = 1e-12
ATOL = 1e-12
GLANCING_BAND = 1e-6
TRANSVERSALITY_TOL = 1e-8


@dataclass(frozen=True)
class LambdaField:
    """Turning rate ``lam`` on SM.

    ``zero``; ``const:b`` (constant magnetic field); ``conformal:<sigma spec>``
    for ``lam(x, v) = dsigma'_x(v^perp)``, i.e. ``-*dsigma'(v)`` with ``*dx = dy``.
    """

    kind: str = "zero"
    value: float = 0.0
    sigma: ConformalFactor | None = None

    @classmethod
    def parse(cls, spec: str) -> "LambdaField":
        spec = spec.strip().lower()
        if spec == "zero":
            return cls()
        head, _, rest = spec.partition(":")
        if head == "const":
            try:
                return cls("const", float(rest))
            except ValueError:
                raise ConfigError(f"bad lambda spec {spec!r}") from None
        if head == "conformal":
            return cls("conformal", sigma=ConformalFactor.parse(rest))
        raise ConfigError(f"unknown lambda preset {spec!r}")

    @property
    def spec(self) -> str:
        if self.kind == "zero":
            return "zero"
        if self.kind == "const":
            return f"const:{self.value!r}"
        return f"conformal:{self.sigma.spec}"

    @property
    def is_zero(self) -> bool:
        return (self.kind == "zero" or (self.kind == "const" and self.value == 0.0)
                or (self.kind == "conformal" and self.sigma.kind in ("zero", "const")))

    def jet(self, m: ConformalMetric, x1: float, x2: float, th: float):
        """``(lam, d lam/dx1, d lam/dx2, d lam/dtheta)`` at one point."""
        if self.kind == "zero":
            return 0.0, 0.0, 0.0, 0.0
        if self.kind == "const":
            return self.value, 0.0, 0.0, 0.0
        s0, (a1, a2), _ = m.sigma.jet(x1, x2)
        _, (p1, p2), (p11, p12, p22) = self.sigma.jet(x1, x2)
        e = math.exp(-float(s0))
        c, sn = math.cos(th), math.sin(th)
        lam = e * (-sn * float(p1) + c * float(p2))
        dth = e * (-c * float(p1) - sn * float(p2))
        d1 = -float(a1) * lam + e * (-sn * float(p11) + c * float(p12))
        d2 = -float(a2) * lam + e * (-sn * float(p12) + c * float(p22))
        return lam, d1, d2, dth


@dataclass(frozen=True)
class ThermostatField:
    metric: ConformalMetric = field(default_factory=ConformalMetric)
    lam: LambdaField = field(default_factory=LambdaField)

    @classmethod
    def parse(cls, metric: str = "zero", lam: str = "zero") -> "ThermostatField":
        return cls(ConformalMetric.parse(metric), LambdaField.parse(lam))

    def __call__(self, t, y):
        x1, x2, th = float(y[0]), float(y[1]), float(y[2])
        s, s1, s2 = self.metric.sigma.point_jet(x1, x2)
        e = math.exp(-s)
        c, sn = math.cos(th), math.sin(th)
        if self.lam.kind == "zero":
            lam = 0.0
        elif self.lam.kind == "const":
            lam = self.lam.value
        else:
            _, p1, p2 = self.lam.sigma.point_jet(x1, x2)
            lam = e * (-sn * p1 + c * p2)
        return np.array([e * c, e * sn, e * (-sn * s1 + c * s2) + lam])

    def vector(self, y) -> np.ndarray:
        return self(0.0, y)

    def lam_derivatives(self, y):
        """``(lam, H lam, V lam)`` at ``y``."""
        lam, d1, d2, dth = self.lam.jet(self.metric, float(y[0]), float(y[1]), float(y[2]))
        _, H, _ = frame_vectors(self.metric, np.asarray(y, dtype=float))
        return lam, float(H @ np.array([d1, d2, dth])), dth

    def default_tmax(self) -> float:
        return _default_tmax(self.metric)


@lru_cache(maxsize=256)
def _default_tmax(metric: ConformalMetric) -> float:
    # 10^3 times a bound on the diameter (Euclidean diameter 2, rescaled)
    r, a = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 2 * np.pi, 17))
    smax = float(np.max(metric.sigma.value(r * np.cos(a), r * np.sin(a))))
    return 1e3 * 2.0 * math.exp(max(smax, 0.0))


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # shape (n, 3)
    exit_time: float | None = None
    exit_ray: BoundaryRay | None = None
    exit_state: np.ndarray | None = None
    dense: object = field(default=None, repr=False)

    @property
    def samples(self) -> list[tuple[float, PhasePoint]]:
        return [(float(t), PhasePoint.from_array(y)) for t, y in zip(self.t, self.y)]

    @property
    def exit(self):
        if self.exit_time is None:
            return None
        return self.exit_time, self.exit_ray


def _exit_event(t, y):
    return y[0] * y[0] + y[1] * y[1] - 1.0


_exit_event.terminal = True
_exit_event.direction = 1


def _polish_exit(F: ThermostatField, sol, t0: float, lo: float, hi: float) -> tuple[float, np.ndarray]:
    t = t0
    for _ in range(8):
        y = sol(t)
        g = y[0] * y[0] + y[1] * y[1] - 1.0
        dy = F.vector(y)
        dg = 2.0 * (y[0] * dy[0] + y[1] * dy[1])
        if abs(dg) < TRANSVERSALITY_TOL:
            raise NonTransversalExit(f"glancing exit at t={t:.6g} (d|x|^2/dt={dg:.3g})")
        step = g / dg
        t = min(max(t - step, lo), hi)
        if abs(step) < 1e-15 * max(1.0, abs(t)):
            break
    y = sol(t)
    dy = F.vector(y)
    if abs(2.0 * (y[0] * dy[0] + y[1] * dy[1])) < TRANSVERSALITY_TOL:
        raise NonTransversalExit(f"glancing exit at t={t:.6g}")
    return t, y


def integrate(F: ThermostatField, p0, tmax: float | None = None, *, backward: bool = False,
              stop_at_boundary: bool = True, rtol: float = RTOL, atol: float = ATOL,
              dense: bool = True) -> Trajectory:
    """Integrate ``dp/dt = F(p)`` from ``p0`` up to ``tmax`` or the boundary exit.

    With ``backward=True`` the flow runs in negative time; the returned
    trajectory then has times in ``[-T, 0]`` (still increasing) and the exit
    refers to the backward exit at time ``-T``. With ``dense=False`` only the
    final step keeps an interpolant and ``Trajectory.dense`` is None.

    Raises
    ------
    NonTransversalExit
        The orbit meets the boundary tangentially.
    StepLimitExceeded
        The solver failed.
    Trapped
        No exit before ``tmax`` (only when ``tmax`` was defaulted).
    """
    y0 = p0.array if isinstance(p0, PhasePoint) else np.asarray(p0, dtype=float)
    defaulted = tmax is None
    if defaulted:
        tmax = F.default_tmax()
    sign = -1.0 if backward else 1.0
    first_step = None
    if y0[0] ** 2 + y0[1] ** 2 > 1.0 - 1e-9:
        # start on the boundary: keep the t=0 root of |x|^2 - 1 out of the first step
        dy = F.vector(y0)
        first_step = min(1e-2, max(1e-3 * abs(y0[0] * dy[0] + y0[1] * dy[1]), 1e-12))
    # the stepper is driven directly: solve_ivp bookkeeping dominates the cost
    # of these short, smooth orbits
    solver = DOP853(F, 0.0, y0, sign * tmax, rtol=rtol, atol=atol, first_step=first_step)
    ts, ys, interps = [0.0], [y0.copy()], []
    g_old = _exit_event(0.0, y0)
    te = None
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise StepLimitExceeded(message)
        ts.append(solver.t)
        ys.append(solver.y.copy())
        g_new = _exit_event(solver.t, solver.y)
        crossed = stop_at_boundary and g_old < 0.0 <= g_new
        if dense or crossed:
            interp = solver.dense_output()
            interps.append(interp)
        if crossed:
            te = brentq(lambda t: _exit_event(t, interp(t)), solver.t_old, solver.t,
                        xtol=1e-15, rtol=4 * np.finfo(float).eps)
            break
        g_old = g_new
    t, y = np.array(ts), np.array(ys)
    sol = OdeSolution(t, interps) if dense and interps else None
    traj = Trajectory(t, y, dense=sol)
    if te is not None:
        lo, hi = sorted((float(t[-2]), float(t[-1])))
        te, ye = _polish_exit(F, interps[-1], te, lo, hi)
        keep = sign * t < sign * te
        t = np.append(t[keep], te)
        y = np.vstack([y[keep], ye])
        traj = Trajectory(t, y, exit_time=abs(te), exit_state=ye, dense=sol,
                          exit_ray=BoundaryRay.from_phase_point(
                              PhasePoint(ye[0] / math.hypot(ye[0], ye[1]),
                                         ye[1] / math.hypot(ye[0], ye[1]), ye[2])))
    elif stop_at_boundary and defaulted:
        raise Trapped(f"no boundary exit before t={tmax:g}")
    if backward:
        traj.t = traj.t[::-1]
        traj.y = traj.y[::-1]
    return traj


def flow_map(F: ThermostatField, y0, t: float, rtol: float = RTOL, atol: float = ATOL) -> np.ndarray:
    """``phi_t(y0)`` without boundary checks (presets extend past the disk)."""
    y0 = np.asarray(y0, dtype=float)
    if t == 0:
        return y0.copy()
    sol = solve_ivp(F, (0.0, t), y0, method="DOP853", rtol=rtol, atol=atol)
    if sol.status == -1:
        raise StepLimitExceeded(sol.message)
    return sol.y[:, -1]


@dataclass(frozen=True)
class ScatteringResult:
    ray: BoundaryRay
    tau_tilde: float
    exit_state: np.ndarray  # (x1, x2, theta) of the image, theta unwrapped


def scattering(F: ThermostatField, ray: BoundaryRay, tmax: float | None = None,
               rtol: float = RTOL, atol: float = ATOL) -> ScatteringResult:
    """Scattering relation and signed travel time for one boundary ray.

    Inward rays flow forward to the exit (``tau_tilde > 0``); outward rays flow
    backward (``tau_tilde < 0``); rays within ``GLANCING_BAND`` of glancing are
    returned unchanged with ``tau_tilde = 0``.
    """
    p0 = ray.to_phase_point()
    if ray.glancing_distance() <= GLANCING_BAND:
        return ScatteringResult(ray, 0.0, p0.array)
    backward = ray.is_outward
    traj = integrate(F, p0, tmax, backward=backward, rtol=rtol, atol=atol, dense=False)
    if traj.exit_time is None:
        raise Trapped(f"ray {ray} did not exit before tmax")
    tau = -traj.exit_time if backward else traj.exit_time
    return ScatteringResult(traj.exit_ray, tau, traj.exit_state)


@dataclass
class ScatteringTable:
    """Scattering relation sampled on inward rays ``(beta_i, gamma_j)``."""

    beta: np.ndarray
    gamma: np.ndarray
    beta_out: np.ndarray
    gamma_out: np.ndarray
    tau_tilde: np.ndarray
    status: np.ndarray
    field_spec: dict = field(default_factory=dict)

    COLUMNS = ("beta", "gamma", "beta_out", "gamma_out", "tau_tilde", "status")

    @property
    def shape(self):
        return self.tau_tilde.shape

    def __len__(self):
        return self.tau_tilde.size

    def rows(self):
        B, G = np.meshgrid(self.beta, self.gamma, indexing="ij")
        for idx in np.ndindex(self.shape):
            yield (float(B[idx]), float(G[idx]), float(self.beta_out[idx]),
                   float(self.gamma_out[idx]), float(self.tau_tilde[idx]), str(self.status[idx]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "ScatteringTable":
        text = source if "\n" in str(source) else open(source, encoding="utf-8").read()
        rows = list(csv.DictReader(io.StringIO(text)))
        beta = np.array(sorted({float(r["beta"]) for r in rows}))
        gamma = np.array(sorted({float(r["gamma"]) for r in rows}))
        shape = (len(beta), len(gamma))
        out = {k: np.empty(shape) for k in ("beta_out", "gamma_out", "tau_tilde")}
        status = np.empty(shape, dtype=object)
        bi = {b: i for i, b in enumerate(beta)}
        gi = {g: j for j, g in enumerate(gamma)}
        for r in rows:
            idx = bi[float(r["beta"])], gi[float(r["gamma"])]
            for k in out:
                out[k][idx] = float(r[k])
            status[idx] = r["status"]
        return cls(beta, gamma, out["beta_out"], out["gamma_out"], out["tau_tilde"], status)

    def to_json(self) -> str:
        return json.dumps({
            "field": self.field_spec,
            "beta": self.beta.tolist(), "gamma": self.gamma.tolist(),
            "beta_out": self.beta_out.tolist(), "gamma_out": self.gamma_out.tolist(),
            "tau_tilde": self.tau_tilde.tolist(), "status": self.status.tolist(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScatteringTable":
        d = json.loads(text)
        return cls(np.array(d["beta"]), np.array(d["gamma"]), np.array(d["beta_out"]),
                   np.array(d["gamma_out"]), np.array(d["tau_tilde"]),
                   np.array(d["status"], dtype=object), d.get("field", {}))


def default_grid(n_beta: int, n_gamma: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centred grid on ``[0, 2 pi) x (0, pi)`` avoiding the glancing set."""
    beta = 2 * np.pi * np.arange(n_beta) / n_beta
    gamma = np.pi * (np.arange(n_gamma) + 0.5) / n_gamma
    return beta, gamma


def worker_count() -> int:
    cap = os.environ.get("TWISTORLAB_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"TWISTORLAB_THREADS must be an integer, got {cap!r}") from None
    return n


def _table_row(args):
    F, b, gamma, rtol, atol = args
    row = []
    for g in gamma:
        try:
            r = scattering(F, BoundaryRay(b, g), rtol=rtol, atol=atol)
            row.append((r.ray.beta, r.ray.gamma, r.tau_tilde, "ok"))
        except TwistorLabError as exc:
            row.append((math.nan, math.nan, math.nan, type(exc).__name__))
    return row


def scattering_table(F: ThermostatField, n_beta: int, n_gamma: int, *, workers: int | None = None,
                     rtol: float = RTOL, atol: float = ATOL) -> ScatteringTable:
    """Sweep :func:`scattering` over the inward grid from :func:`default_grid`.

    Rows are independent tasks; results do not depend on ``workers``.
    """
    beta, gamma = default_grid(n_beta, n_gamma)
    workers = worker_count() if workers is None else workers
    tasks = [(F, b, gamma, rtol, atol) for b in beta]
    if workers > 1 and n_beta > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_table_row, tasks))
    else:
        rows = [_table_row(t) for t in tasks]
    arr = np.array([[cell[:3] for cell in row] for row in rows], dtype=float)
    status = np.array([[cell[3] for cell in row] for row in rows], dtype=object)
    return ScatteringTable(beta, gamma, arr[..., 0], arr[..., 1], arr[..., 2], status,
                           {"metric": F.metric.spec, "lambda": F.lam.spec})


def chord_scattering(ray: BoundaryRay) -> tuple[BoundaryRay, float]:
    """Closed-form Euclidean scattering: ``y = x - 2<x,v> v``, ``tau = -2<x,v>``."""
    p = ray.to_phase_point()
    x = np.array([p.x1, p.x2])
    v = np.array([math.cos(p.theta), math.sin(p.theta)])
    tau = -2.0 * float(x @ v)
    y = x + tau * v
    beta = math.atan2(y[1], y[0])
    return BoundaryRay(beta, p.theta - beta - 0.5 * math.pi), tau


def angle_distance(a, b):
    """Distance on the circle between angles, elementwise."""
    return np.abs(wrap_angle(np.asarray(a) - np.asarray(b)))


@dataclass(frozen=True)
class TimeFunction:
    """Preset ``tau`` on SM vanishing on the boundary.

    ``zero``; ``quad:s`` for ``s (1 - |x|^2)``; ``quadcos:s`` for
    ``s (1 - |x|^2)(1 + cos(theta)/2)``.
    """

    kind: str = "zero"
    s: float = 0.0

    @classmethod
    def parse(cls, spec: str) -> "TimeFunction":
        head, _, rest = spec.strip().lower().partition(":")
        if head == "zero":
            return cls()
        if head in ("quad", "quadcos"):
            return cls(head, float(rest))
        raise ConfigError(f"unknown time function {spec!r}")

    def jet(self, y):
        """``(tau, d tau/dx1, d tau/dx2, d tau/dtheta)``."""
        x1, x2, th = (float(v) for v in y)
        if self.kind == "zero":
            return 0.0, 0.0, 0.0, 0.0
        r = 1.0 - x1 * x1 - x2 * x2
        f, df = 1.0, 0.0
        if self.kind == "quadcos":
            f, df = 1.0 + 0.5 * math.cos(th), -0.5 * math.sin(th)
        s = self.s
        return s * r * f, -2 * s * x1 * f, -2 * s * x2 * f, s * r * df


@dataclass(frozen=True)
class TimeChangeReport:
    transverse_residual: float  # |H-, V-components of dphi(X)|
    x_component: float
    one_plus_x_tau: float

    @property
    def q(self) -> float:
        return 1.0 / self.x_component

    @property
    def factor_residual(self) -> float:
        return abs(self.x_component - self.one_plus_x_tau)


def time_change_check(m: ConformalMetric, tau: TimeFunction, p, h: float = 1e-4) -> TimeChangeReport:
    """Compare ``dphi(X)`` with ``(1 + X tau) X`` for ``phi(p) = phi_{tau(p)}(p)``.

    ``dphi(X)`` is a central difference of ``phi`` along geodesic-flow orbits.
    """
    F = ThermostatField(m)
    y = p.array if isinstance(p, PhasePoint) else np.asarray(p, dtype=float)

    def phi(q):
        return flow_map(F, q, tau.jet(q)[0])

    yp, ym = flow_map(F, y, h), flow_map(F, y, -h)
    dphi_x = (phi(yp) - phi(ym)) / (2 * h)
    target = phi(y)
    coef = np.linalg.solve(frame_vectors(m, target).T, dphi_x)
    X = frame_vectors(m, y)[0]
    t0, t1, t2, tth = tau.jet(y)
    x_tau = float(X @ np.array([t1, t2, tth]))
    if 1.0 + x_tau <= 0:
        raise ValueError("time change requires 1 + X tau > 0")
    return TimeChangeReport(float(np.hypot(coef[1], coef[2])), float(coef[0]), 1.0 + x_tau)
