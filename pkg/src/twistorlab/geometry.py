"""Conformal disk metrics and the canonical frame on the unit circle bundle.

Metrics are of the form ``g = exp(2*sigma) * (dx1**2 + dx2**2)`` on the closed
unit disk.  A point of the unit circle bundle ``SM`` is written ``(x1, x2, theta)``
where ``theta`` is the Euclidean angle of the g-unit vector
``v = exp(-sigma(x)) * (cos theta, sin theta)``.

Everything here accepts numpy arrays and broadcasts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ConfigError

BOUNDARY_EPS = 1e-12
# sin(pi) is 1.2e-16 in floating point
GLANCING_EPS = 1e-15

# monomial order for the ``poly`` preset: 1, x, y, x^2, xy, y^2, x^3, ...
_POLY_MONOMIALS = [(i - j, j) for i in range(5) for j in range(i + 1)]


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


@dataclass(frozen=True)
class ConformalFactor:
    """Analytic conformal factor ``sigma`` with closed-form derivatives.

    Presets (string spec in parentheses):

    * ``Zero`` (``zero``)
    * ``Constant(c)`` (``const:c``)
    * ``LinearReal(a)``: ``sigma = a*x1`` (``linreal:a``)
    * ``RadialBump(A, w)``: ``sigma = A*exp(-|x|^2/w^2)`` (``bump:A:w``)
    * ``Polynomial``: bivariate polynomial of total degree <= 4, coefficients
      in the order 1, x, y, x^2, xy, y^2, ... (``poly:c0:c1:...``)
    * ``ConstantCurvature(k)``: ``sigma = -log(1 + k|x|^2/4)``, Gaussian
      curvature identically ``k`` (``constcurv:k``); requires ``k > -4``.
    """

    kind: str = "zero"
    params: tuple[float, ...] = ()
    _coef: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        nparams = {"zero": 0, "const": 1, "linreal": 1, "bump": 2, "constcurv": 1}
        if self.kind == "poly":
            if not 1 <= len(self.params) <= len(_POLY_MONOMIALS):
                raise ConfigError(f"poly preset takes 1..15 coefficients, got {len(self.params)}")
            coef = np.zeros((5, 5))
            for c, (i, j) in zip(self.params, _POLY_MONOMIALS):
                coef[i, j] = c
            object.__setattr__(self, "_coef", coef)
        elif self.kind not in nparams:
            raise ConfigError(f"unknown conformal factor preset {self.kind!r}")
        elif len(self.params) != nparams[self.kind]:
            raise ConfigError(f"preset {self.kind!r} takes {nparams[self.kind]} parameters")
        if self.kind == "bump" and self.params[1] <= 0:
            raise ConfigError("bump width must be positive")
        if self.kind == "constcurv" and self.params[0] <= -4:
            raise ConfigError("constcurv:k needs k > -4 to be smooth on the closed disk")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @classmethod
    def parse(cls, spec: str) -> "ConformalFactor":
        parts = spec.strip().lower().split(":")
        try:
            params = tuple(float(p) for p in parts[1:])
        except ValueError:
            raise ConfigError(f"bad metric spec {spec!r}") from None
        return cls(parts[0], params)

    @property
    def spec(self) -> str:
        return ":".join([self.kind] + [repr(p) for p in self.params])

    def __str__(self):
        return self.spec

    def jet(self, x1, x2):
        """Return ``(sigma, (s1, s2), (s11, s12, s22))`` at ``(x1, x2)``."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        zero = np.zeros(np.broadcast(x1, x2).shape)
        k = self.kind
        if k == "zero":
            return zero, (zero, zero), (zero, zero, zero)
        if k == "const":
            return zero + self.params[0], (zero, zero), (zero, zero, zero)
        if k == "linreal":
            a = self.params[0]
            return a * x1 + zero, (zero + a, zero), (zero, zero, zero)
        if k == "bump":
            amp, w = self.params
            e = amp * np.exp(-(x1 * x1 + x2 * x2) / (w * w))
            c = -2.0 / (w * w)
            s1, s2 = c * x1 * e, c * x2 * e
            s11 = c * e + c * c * x1 * x1 * e
            s22 = c * e + c * c * x2 * x2 * e
            s12 = c * c * x1 * x2 * e
            return e, (s1, s2), (s11, s12, s22)
        if k == "constcurv":
            kk = self.params[0]
            d = 1.0 + 0.25 * kk * (x1 * x1 + x2 * x2)
            s1 = -0.5 * kk * x1 / d
            s2 = -0.5 * kk * x2 / d
            s11 = -0.5 * kk / d + 0.25 * kk * kk * x1 * x1 / (d * d)
            s22 = -0.5 * kk / d + 0.25 * kk * kk * x2 * x2 / (d * d)
            s12 = 0.25 * kk * kk * x1 * x2 / (d * d)
            return -np.log(d), (s1, s2), (s11, s12, s22)
        c = self._coef
        cx = P.polyder(c, axis=0)
        cy = P.polyder(c, axis=1)
        val = P.polyval2d(x1, x2, c) + zero
        s1 = P.polyval2d(x1, x2, cx) + zero
        s2 = P.polyval2d(x1, x2, cy) + zero
        s11 = P.polyval2d(x1, x2, P.polyder(cx, axis=0)) + zero
        s12 = P.polyval2d(x1, x2, P.polyder(cx, axis=1)) + zero
        s22 = P.polyval2d(x1, x2, P.polyder(cy, axis=1)) + zero
        return val, (s1, s2), (s11, s12, s22)

    def point_jet(self, x1: float, x2: float) -> tuple[float, float, float]:
        """``(sigma, s1, s2)`` at one point, as floats (fast path for the flow)."""
        k = self.kind
        if k == "zero":
            return 0.0, 0.0, 0.0
        if k == "const":
            return self.params[0], 0.0, 0.0
        if k == "linreal":
            a = self.params[0]
            return a * x1, a, 0.0
        if k == "bump":
            amp, w = self.params
            e = amp * math.exp(-(x1 * x1 + x2 * x2) / (w * w))
            c = -2.0 / (w * w)
            return e, c * x1 * e, c * x2 * e
        v, (s1, s2), _ = self.jet(x1, x2)
        return float(v), float(s1), float(s2)

    def value(self, x1, x2):
        return self.jet(x1, x2)[0]

    def gradient(self, x1, x2):
        return self.jet(x1, x2)[1]

    def hessian(self, x1, x2):
        return self.jet(x1, x2)[2]

    def __sub__(self, other: "ConformalFactor") -> "ConformalFactor":
        return _Combination(self, other, -1.0)

    def plus(self, other: "ConformalFactor", weight: float = 1.0) -> "ConformalFactor":
        """``self + weight * other``."""
        return _Combination(self, other, weight)


class _Combination(ConformalFactor):
    # a + w*b, for conformal changes of a preset metric
    def __init__(self, a: ConformalFactor, b: ConformalFactor, weight: float):
        object.__setattr__(self, "kind", "combination")
        object.__setattr__(self, "params", ())
        object.__setattr__(self, "_coef", None)
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_b", b)
        object.__setattr__(self, "_w", float(weight))

    def __eq__(self, other):
        return (isinstance(other, _Combination)
                and (self._a, self._b, self._w) == (other._a, other._b, other._w))

    def __hash__(self):
        return hash((self._a, self._b, self._w))

    @property
    def spec(self):
        return f"({self._a.spec}){self._w:+g}*({self._b.spec})"

    def point_jet(self, x1, x2):
        a = self._a.point_jet(x1, x2)
        b = self._b.point_jet(x1, x2)
        return tuple(p + self._w * q for p, q in zip(a, b))

    def jet(self, x1, x2):
        va, ga, ha = self._a.jet(x1, x2)
        vb, gb, hb = self._b.jet(x1, x2)
        w = self._w
        return (va + w * vb, tuple(p + w * q for p, q in zip(ga, gb)),
                tuple(p + w * q for p, q in zip(ha, hb)))


@dataclass(frozen=True)
class ConformalMetric:
    """The metric ``exp(2 sigma) |dx|^2`` on the closed unit disk."""

    sigma: ConformalFactor = field(default_factory=ConformalFactor)

    @classmethod
    def parse(cls, spec: str) -> "ConformalMetric":
        return cls(ConformalFactor.parse(spec))

    @property
    def spec(self) -> str:
        return self.sigma.spec

    def matrix(self, x1, x2):
        s = self.sigma.value(x1, x2)
        e = np.exp(2 * s)
        if np.any(~(e > 0)):
            raise FloatingPointError("metric is not positive definite")
        return e

    def christoffel(self, x1, x2) -> np.ndarray:
        """Christoffel symbols ``G[k, i, j]`` at a single point."""
        _, (s1, s2), _ = self.sigma.jet(x1, x2)
        ds = np.array([float(s1), float(s2)])
        eye = np.eye(2)
        return (np.einsum("ki,j->kij", eye, ds) + np.einsum("kj,i->kij", eye, ds)
                - np.einsum("ij,k->kij", eye, ds))


@dataclass(frozen=True)
class PhasePoint:
    x1: float
    x2: float
    theta: float

    def __post_init__(self):
        if math.hypot(self.x1, self.x2) > 1 + BOUNDARY_EPS:
            raise ValueError(f"point ({self.x1}, {self.x2}) lies outside the closed disk")
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.theta])

    @classmethod
    def from_array(cls, y) -> "PhasePoint":
        return cls(float(y[0]), float(y[1]), float(y[2]))


@dataclass(frozen=True)
class BoundaryRay:
    """Boundary point ``exp(i beta)`` with ``v = cos(gamma) nu_perp + sin(gamma) nu``.

    ``sin(gamma) > 0`` is inward, ``< 0`` outward, ``gamma in {0, pi}`` glancing.
    """

    beta: float
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "beta", float(np.mod(self.beta, 2 * np.pi)))
        object.__setattr__(self, "gamma", float(wrap_angle(self.gamma)))

    @property
    def is_inward(self) -> bool:
        return math.sin(self.gamma) > GLANCING_EPS

    @property
    def is_outward(self) -> bool:
        return math.sin(self.gamma) < -GLANCING_EPS

    @property
    def is_glancing(self) -> bool:
        return self.glancing_distance() <= GLANCING_EPS

    def glancing_distance(self) -> float:
        return abs(math.sin(self.gamma))

    def to_phase_point(self) -> PhasePoint:
        return PhasePoint(math.cos(self.beta), math.sin(self.beta),
                          self.beta + 0.5 * math.pi + self.gamma)

    @classmethod
    def from_phase_point(cls, p: PhasePoint) -> "BoundaryRay":
        beta = math.atan2(p.x2, p.x1)
        return cls(beta, p.theta - beta - 0.5 * math.pi)


def frame_vectors(m: ConformalMetric, p) -> np.ndarray:
    """Frame ``(X, H, V)`` at ``p`` as rows of coefficients in ``(x1, x2, theta)``.

    ``X`` generates the geodesic flow, ``V = d/dtheta`` and ``H = [V, X]``.
    ``p`` may be a PhasePoint or an array whose last axis is ``(x1, x2, theta)``;
    the result then has shape ``p.shape[:-1] + (3, 3)``.
    """
    y = p.array if isinstance(p, PhasePoint) else np.asarray(p, dtype=float)
    x1, x2, th = y[..., 0], y[..., 1], y[..., 2]
    s, (s1, s2), _ = m.sigma.jet(x1, x2)
    e = np.exp(-s)
    c, sn = np.cos(th), np.sin(th)
    zero = np.zeros_like(e)
    X = np.stack([e * c, e * sn, e * (-sn * s1 + c * s2)], axis=-1)
    H = np.stack([-e * sn, e * c, -e * (c * s1 + sn * s2)], axis=-1)
    V = np.stack([zero, zero, zero + 1.0], axis=-1)
    return np.stack([X, H, V], axis=-2)


def frame_jacobians(m: ConformalMetric, y) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians ``dX/d(x1,x2,theta)`` and ``dH/d(...)`` at a single point."""
    x1, x2, th = (float(v) for v in y)
    s, (s1, s2), (s11, s12, s22) = m.sigma.jet(x1, x2)
    e = math.exp(-float(s))
    s1, s2, s11, s12, s22 = (float(v) for v in (s1, s2, s11, s12, s22))
    c, sn = math.cos(th), math.sin(th)
    gx = [s1, s2]
    hx = [[s11, s12], [s12, s22]]

    def field_jac(comp, comp_dtheta, comp_dx):
        # comp: unscaled components (before factor e); d/dx_i(e*f) = e*(df - s_i f)
        J = np.empty((3, 3))
        for r in range(3):
            for i in range(2):
                J[r, i] = e * (comp_dx[r][i] - gx[i] * comp[r])
            J[r, 2] = e * comp_dtheta[r]
        return J

    xc = [c, sn, -sn * s1 + c * s2]
    xc_t = [-sn, c, -c * s1 - sn * s2]
    xc_x = [[0, 0], [0, 0], [-sn * hx[0][i] + c * hx[1][i] for i in range(2)]]
    hc = [-sn, c, -(c * s1 + sn * s2)]
    hc_t = [-c, -sn, -(-sn * s1 + c * s2)]
    hc_x = [[0, 0], [0, 0], [-(c * hx[0][i] + sn * hx[1][i]) for i in range(2)]]
    return field_jac(xc, xc_t, xc_x), field_jac(hc, hc_t, hc_x)


def lie_bracket(A, dA, B, dB) -> np.ndarray:
    """``[A, B] = dB.A - dA.B`` for vector fields given with their Jacobians."""
    return dB @ A - dA @ B


def structure_residuals(m: ConformalMetric, y) -> dict:
    """Brackets of the frame at one point, alongside the curvature.

    Returns the brackets ``[V,X]``, ``[V,H]``, ``[X,H]`` computed from analytic
    Jacobians together with the frame and ``K`` so callers can compare.
    """
    y = np.asarray(y, dtype=float)
    X, H, V = frame_vectors(m, y)
    dX, dH = frame_jacobians(m, y)
    dV = np.zeros((3, 3))
    return {
        "X": X, "H": H, "V": V,
        "VX": lie_bracket(V, dV, X, dX),
        "VH": lie_bracket(V, dV, H, dH),
        "XH": lie_bracket(X, dX, H, dH),
        "K": float(curvature(m, y[0], y[1])),
    }


def sasaki_matrix(m: ConformalMetric, y) -> np.ndarray:
    """Sasaki metric in coordinates ``(x1, x2, theta)``.

    ``|xi|^2 = exp(2 sigma)|dx(xi)|^2 + omega(xi)^2`` with the connection form
    ``omega = dtheta + s1 dx2 - s2 dx1``.
    """
    x1, x2 = float(y[0]), float(y[1])
    s, (s1, s2), _ = m.sigma.jet(x1, x2)
    omega = np.array([-float(s2), float(s1), 1.0])
    G = np.diag([math.exp(2 * float(s)), math.exp(2 * float(s)), 0.0])
    return G + np.outer(omega, omega)


def frame_coefficients(m: ConformalMetric, y, xi, lam: float = 0.0) -> np.ndarray:
    """Coefficients of the coordinate vector ``xi`` in the frame ``(X + lam V, H, V)``."""
    X, H, V = frame_vectors(m, np.asarray(y, dtype=float))
    basis = np.stack([X + lam * V, H, V], axis=1)
    return np.linalg.solve(basis, np.asarray(xi, dtype=float))


def curvature(m: ConformalMetric, x1, x2):
    """Gaussian curvature ``-exp(-2 sigma) * laplacian(sigma)``."""
    s, _, (s11, _, s22) = m.sigma.jet(x1, x2)
    return -np.exp(-2 * s) * (s11 + s22)


@dataclass(frozen=True)
class BoundaryGeometry:
    nu: np.ndarray
    nu_perp: np.ndarray
    second_fundamental_form: float


def boundary_geometry(m: ConformalMetric, beta: float) -> BoundaryGeometry:
    """Inward unit normal, ``nu_perp = -rot(nu)`` and ``Pi(nu_perp, nu_perp)`` at ``exp(i beta)``.

    The second fundamental form is ``g(D_T T, nu)`` for the unit tangent ``T = nu_perp``
    of the boundary circle, with the covariant derivative built from Christoffel
    symbols.
    """
    cb, sb = math.cos(beta), math.sin(beta)
    s, (s1, s2), _ = m.sigma.jet(cb, sb)
    s, s1, s2 = float(s), float(s1), float(s2)
    e = math.exp(-s)
    nu = -e * np.array([cb, sb])
    nu_perp = e * np.array([-sb, cb])
    # T(beta) = exp(-sigma(c(beta))) * (-sin, cos); arclength ds = exp(sigma) dbeta
    dsigma_dbeta = -sb * s1 + cb * s2
    dT_dbeta = e * np.array([-cb, -sb]) - dsigma_dbeta * nu_perp
    gam = m.christoffel(cb, sb)
    accel = e * dT_dbeta + np.einsum("kij,i,j->k", gam, nu_perp, nu_perp)
    pi = math.exp(2 * s) * float(accel @ nu)
    return BoundaryGeometry(nu, nu_perp, pi)


@dataclass(frozen=True)
class ConnectionDifference:
    christoffel: np.ndarray
    closed_form: np.ndarray

    @property
    def difference(self) -> float:
        return float(np.max(np.abs(self.christoffel - self.closed_form)))


def connection_difference(m1: ConformalMetric, m2: ConformalMetric, x, xi) -> ConnectionDifference:
    """``D2_xi xi - D1_xi xi`` two ways for ``g2 = exp(2 sigma) g1``.

    From Christoffel symbols of each metric, and from the closed form
    ``-g1(xi, xi) grad_{g1} sigma + 2 dsigma(xi) xi``.
    """
    x1, x2 = float(x[0]), float(x[1])
    xi = np.asarray(xi, dtype=float)
    d_gamma = m2.christoffel(x1, x2) - m1.christoffel(x1, x2)
    via_christoffel = np.einsum("kij,i,j->k", d_gamma, xi, xi)

    s1 = float(m1.sigma.value(x1, x2))
    ds = m2.sigma - m1.sigma
    grad = np.array([float(g) for g in ds.gradient(x1, x2)])
    g1_xixi = math.exp(2 * s1) * float(xi @ xi)
    grad_g1 = math.exp(-2 * s1) * grad
    closed = -g1_xixi * grad_g1 + 2 * float(grad @ xi) * xi
    return ConnectionDifference(via_christoffel, closed)


def boundary_length(m: ConformalMetric, n: int = 256) -> float:
    """g-length of the boundary circle by the periodic trapezoid rule."""
    b = 2 * np.pi * np.arange(n) / n
    return float(np.mean(np.exp(m.sigma.value(np.cos(b), np.sin(b)))) * 2 * np.pi)


def rescaled_metric(m: ConformalMetric, sigma: ConformalFactor, exponent: float = 2.0) -> ConformalMetric:
    """``exp(exponent * sigma) g`` for ``g = m``."""
    return ConformalMetric(m.sigma.plus(sigma, exponent / 2.0))
