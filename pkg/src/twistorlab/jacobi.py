"""Linearised thermostat flow and the glancing-limit identities.

Writing ``dphi_t(xi) = a F + b H + c V`` along an orbit of ``F = X + lam V``,
the coefficients obey

    a' = lam b,    b' = c,    c' = V(lam) c - kappa b,

with ``kappa = K - H(lam) + lam^2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConvexityViolated, StepLimitExceeded
from .flow import (ATOL, RTOL, ThermostatField, _exit_event, default_grid, flow_map,
                   scattering)
from .geometry import (BoundaryRay, ConformalMetric, PhasePoint, boundary_geometry,
                       curvature, frame_coefficients, frame_vectors, sasaki_matrix)


@dataclass(frozen=True)
class VariationalState:
    a: float  # F-component
    b: float  # H-component
    c: float  # V-component

    @classmethod
    def vertical(cls) -> "VariationalState":
        return cls(0.0, 0.0, 1.0)

    @property
    def array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])


def _rhs(F: ThermostatField):
    def rhs(t, u):
        y = u[:3]
        b, c = u[4], u[5]
        lam, h_lam, v_lam = F.lam_derivatives(y)
        kappa = float(curvature(F.metric, y[0], y[1])) - h_lam + lam * lam
        return np.concatenate([F.vector(y), [lam * b, c, v_lam * c - kappa * b]])
    return rhs


@dataclass
class VariationalTrajectory:
    t: np.ndarray
    base: np.ndarray   # (n, 3)
    coeffs: np.ndarray  # (n, 3) columns a, b, c
    dense: object = field(default=None, repr=False)

    def at(self, t: float) -> tuple[np.ndarray, VariationalState]:
        u = self.dense(t)
        return u[:3], VariationalState(*u[3:])


def variational_flow(F: ThermostatField, p0, xi0: VariationalState | None = None, T: float = 1.0,
                     rtol: float = RTOL, atol: float = ATOL, events=None) -> VariationalTrajectory:
    """Integrate the base orbit jointly with ``(a, b, c)`` on ``[0, T]``.

    ``xi0`` defaults to the vertical vector ``V`` (``a=b=0, c=1``).
    """
    y0 = p0.array if isinstance(p0, PhasePoint) else np.asarray(p0, dtype=float)
    xi0 = VariationalState.vertical() if xi0 is None else xi0
    u0 = np.concatenate([y0, xi0.array])
    sol = solve_ivp(_rhs(F), (0.0, T), u0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=events)
    if sol.status == -1:
        raise StepLimitExceeded(sol.message)
    traj = VariationalTrajectory(sol.t, sol.y[:3].T, sol.y[3:].T, sol.sol)
    traj.events = sol.t_events
    return traj


def fd_variation(F: ThermostatField, p0, xi0: VariationalState, T: float,
                 h: float = 1e-4) -> VariationalState:
    """Oracle: central difference of the flow map along ``xi0``, read in the frame at ``phi_T``."""
    y0 = p0.array if isinstance(p0, PhasePoint) else np.asarray(p0, dtype=float)
    lam0 = F.lam_derivatives(y0)[0]
    X, H, V = frame_vectors(F.metric, y0)
    xi = xi0.a * (X + lam0 * V) + xi0.b * H + xi0.c * V
    d = (flow_map(F, y0 + h * xi, T) - flow_map(F, y0 - h * xi, T)) / (2 * h)
    yT = flow_map(F, y0, T)
    lamT = F.lam_derivatives(yT)[0]
    return VariationalState(*frame_coefficients(F.metric, yT, d, lamT))


@dataclass(frozen=True)
class DAlphaReport:
    ray: BoundaryRay
    tau_tilde: float
    f_formula: float
    g_formula: float
    v_formula: float
    f_direct: float
    g_direct: float
    v_direct: float
    condition: float
    degraded: bool

    @property
    def discrepancy(self) -> float:
        return max(abs(self.f_formula - self.f_direct), abs(self.g_formula - self.g_direct))


def _v_tau(F: ThermostatField, ray: BoundaryRay, h: float) -> float:
    tp = scattering(F, BoundaryRay(ray.beta, ray.gamma + h)).tau_tilde
    tm = scattering(F, BoundaryRay(ray.beta, ray.gamma - h)).tau_tilde
    return (tp - tm) / (2 * h)


def d_alpha_of_V(F: ThermostatField, ray: BoundaryRay, h: float = 1e-5) -> DAlphaReport:
    """``f = <d alpha(V), X>`` and ``g = <d alpha(V), H>`` two ways.

    (i) ``f = V tau~ + a(tau~)``, ``g = b(tau~)`` with ``a, b`` from
    :func:`variational_flow` and ``V tau~`` by central differences in gamma;
    (ii) central differences of the scattering relation itself, paired with
    ``X`` and ``H`` in the Sasaki metric at the image point.

    The V-entry reports ``<d alpha(V), V>`` from both routes.
    """
    dist = ray.glancing_distance()
    h = min(h, 0.1 * dist)
    condition = 1.0 / dist
    res = scattering(F, ray)
    tau = res.tau_tilde
    vt = _v_tau(F, ray, h)

    # route (i); for outward rays tau~ < 0 and the same system runs backward
    y0 = ray.to_phase_point().array
    sol = solve_ivp(_rhs(F), (0.0, tau), np.concatenate([y0, [0.0, 0.0, 1.0]]),
                    method="DOP853", rtol=RTOL, atol=ATOL)
    aT, bT, cT = sol.y[3:, -1]
    f_i = vt + aT
    lam_out = F.lam_derivatives(res.exit_state)[0]
    v_i = lam_out * f_i + cT

    # route (ii): d alpha(V) as a coordinate vector
    rp = scattering(F, BoundaryRay(ray.beta, ray.gamma + h))
    rm = scattering(F, BoundaryRay(ray.beta, ray.gamma - h))
    ep, em = rp.exit_state.copy(), rm.exit_state.copy()
    for e in (ep, em):
        e[2] = res.exit_state[2] + math.remainder(e[2] - res.exit_state[2], 2 * math.pi)
    dalpha = (ep - em) / (2 * h)
    G = sasaki_matrix(F.metric, res.exit_state)
    X, H, V = frame_vectors(F.metric, res.exit_state)
    return DAlphaReport(ray, tau, float(f_i), float(bT), float(v_i),
                        float(X @ G @ dalpha), float(H @ G @ dalpha), float(V @ G @ dalpha),
                        condition, condition > 1e6)


def pi_lambda(F: ThermostatField, beta: float, side: int = 0) -> float:
    """``Pi(v, v) - lam(x, v) V(mu)`` at the glancing vector ``gamma = side*pi``."""
    gamma = math.pi * side
    bg = boundary_geometry(F.metric, beta)
    y = BoundaryRay(beta, gamma).to_phase_point().array
    lam = F.lam_derivatives(y)[0]
    return bg.second_fundamental_form - lam * math.cos(gamma)


def richardson(values: list[float], ratio: float = 2.0) -> tuple[float, list[list[float]]]:
    """Richardson table for ``D(h) = D0 + c1 h + c2 h^2 + ...`` at ``h = h0 / ratio^k``."""
    table = [[v] for v in values]
    for k in range(1, len(values)):
        for j in range(1, k + 1):
            fac = ratio ** j
            table[k].append(table[k][j - 1] + (table[k][j - 1] - table[k - 1][j - 1]) / (fac - 1))
    return table[-1][-1], table


@dataclass(frozen=True)
class GlancingReport:
    identity: str
    preset: str
    beta: float
    side: int
    pi_lambda: float
    v_tau: float
    product: float
    sign: int
    residual: float
    extrapolation_orders: int
    grid: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def glancing_identity(F: ThermostatField, beta: float, side: int = 0, gamma0: float = 0.1,
                      levels: int = 5) -> GlancingReport:
    """Residual of ``Pi^lam(v, v) V(tau~) = +-2`` at the glancing vector ``gamma = side*pi``.

    ``V(tau~)`` is extrapolated from one-sided quotients ``tau~(gamma)/(gamma - side*pi)``
    on inward rays at distances ``gamma0 / 2^k``.
    """
    pl = pi_lambda(F, beta, side)
    if pl <= 0:
        raise ConvexityViolated(f"Pi^lambda = {pl:.3g} <= 0 at beta={beta:.4g}, side={side}")
    hs = [gamma0 / 2 ** k for k in range(levels)]
    quotients = []
    for h in hs:
        g = h if side == 0 else math.pi - h
        tau = scattering(F, BoundaryRay(beta, g)).tau_tilde
        quotients.append(tau / (g - math.pi * side))
    vt, _ = richardson(quotients)
    prod = pl * vt
    sign = 1 if prod > 0 else -1
    return GlancingReport("glancing", f"{F.metric.spec}|{F.lam.spec}", beta, side, pl, vt, prod,
                          sign, abs(prod - 2 * sign), levels - 1, hs)


@dataclass(frozen=True)
class SimplicityVerdict:
    simple: bool
    min_b: float
    n_rays: int
    first_conjugate: tuple | None = None

    @property
    def verdict(self) -> str:
        return "Simple" if self.simple else "NotSimple"


def _b_zero(t, u):
    return u[4]


_b_zero.terminal = True
_b_zero.direction = -1


def conjugate_point_scan(m: ConformalMetric, n_rays: int = 64) -> SimplicityVerdict:
    """Scan boundary-to-boundary geodesics for zeros of the Jacobi field ``b``.

    ``b(0) = 0, b'(0) = 1``; the metric passes when ``b > 0`` on ``(0, T]`` for
    every ray, ``T`` the exit time.  ``min_b`` is the smallest ``b(T)``.
    """
    F = ThermostatField(m)
    n_beta = max(1, int(round(math.sqrt(n_rays))))
    n_gamma = max(1, n_rays // n_beta)
    beta, gamma = default_grid(n_beta, n_gamma)
    tmax = F.default_tmax()
    min_b = math.inf
    for b in beta:
        for g in gamma:
            y0 = BoundaryRay(b, g).to_phase_point().array
            sol = solve_ivp(_rhs(F), (0.0, tmax), np.concatenate([y0, [0.0, 0.0, 1.0]]),
                            method="DOP853", rtol=1e-10, atol=1e-10,
                            events=[_exit_event, _b_zero])
            if len(sol.t_events[1]) and (not len(sol.t_events[0])
                                         or sol.t_events[1][0] < sol.t_events[0][0]):
                return SimplicityVerdict(False, 0.0, n_beta * n_gamma,
                                         (float(b), float(g), float(sol.t_events[1][0])))
            min_b = min(min_b, float(sol.y[4, -1]))
            if min_b <= 0:
                return SimplicityVerdict(False, min_b, n_beta * n_gamma, (float(b), float(g), None))
    return SimplicityVerdict(True, min_b, n_beta * n_gamma)
