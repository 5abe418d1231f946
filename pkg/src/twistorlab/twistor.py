"""Euclidean transport twistor space ``C x D`` and holomorphicity checks.

On the Euclidean model the degenerate complex structure is spanned by
``W1 = d/dzbar + mu^2 d/dz`` and ``W2 = d/dmubar``.  Tangent vectors are
written in the real basis ``(d/dx, d/dy, d/dp, d/dq)`` with ``z = x + iy``
and ``mu = p + iq``; complex vectors are complex 4-vectors in that basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circle import FourierSeries, is_fibrewise_holomorphic
from .errors import ConfigError
from .flow import ThermostatField, TimeFunction, flow_map, integrate
from .geometry import ConformalMetric, frame_vectors

RANK_THRESHOLD = 1e-7


@dataclass(frozen=True)
class TwistorPoint:
    z: complex
    mu: complex

    def __post_init__(self):
        if abs(self.mu) > 1 + 1e-12:
            raise ValueError(f"|mu| = {abs(self.mu)} > 1")

    @property
    def on_sm(self) -> bool:
        return abs(abs(self.mu) - 1) < 1e-10

    @property
    def real(self) -> np.ndarray:
        return np.array([self.z.real, self.z.imag, self.mu.real, self.mu.imag])


def dbar_frame(p: TwistorPoint) -> np.ndarray:
    """Rows ``W1, W2`` spanning the structure at ``p`` (complex 4-vectors)."""
    mu2 = p.mu * p.mu
    w1 = 0.5 * np.array([1 + mu2, 1j * (1 - mu2), 0, 0])
    w2 = 0.5 * np.array([0, 0, 1, 1j])
    return np.array([w1, w2], dtype=complex)


def intersection_dimension(p: TwistorPoint, threshold: float = RANK_THRESHOLD) -> int:
    """Complex dimension of ``D cap conj(D)`` by singular-value thresholding."""
    w = dbar_frame(p)
    m = np.vstack([w, np.conj(w)])
    sv = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(sv <= threshold * sv[0]))


def _real_jacobian(w: np.ndarray) -> np.ndarray:
    """4x4 real Jacobian from Wirtinger rows ``[d/dz, d/dzbar, d/dmu, d/dmubar]`` of (Z, M)."""
    J = np.empty((4, 4))
    for r, row in enumerate(w):
        dz, dzb, dm, dmb = row
        cols = [dz + dzb, 1j * (dz - dzb), dm + dmb, 1j * (dm - dmb)]
        J[2 * r] = [c.real for c in cols]
        J[2 * r + 1] = [c.imag for c in cols]
    return J


class TwistorMap:
    """A smooth map ``(z, mu) -> (Z, M)`` with closed-form Wirtinger derivatives."""

    spec = "id"

    def __call__(self, z, mu):
        return z, mu

    def wirtinger(self, z, mu) -> np.ndarray:
        return np.array([[1, 0, 0, 0], [0, 0, 1, 0]], dtype=complex)

    def inverse(self) -> "TwistorMap":
        return self

    def apply(self, p: TwistorPoint) -> TwistorPoint:
        Z, M = self(p.z, p.mu)
        return TwistorPoint(complex(Z), complex(M))

    def jacobian(self, p: TwistorPoint) -> np.ndarray:
        return _real_jacobian(self.wirtinger(p.z, p.mu))

    def fd_jacobian(self, p: TwistorPoint, h: float = 1e-5) -> np.ndarray:
        """Central differences with one Richardson step (``h`` and ``h/2``)."""
        def central(step):
            J = np.empty((4, 4))
            x = p.real
            for k in range(4):
                e = np.zeros(4)
                e[k] = step
                a = self(complex(*(x + e)[:2]), complex(*(x + e)[2:]))
                b = self(complex(*(x - e)[:2]), complex(*(x - e)[2:]))
                d = np.array([a[0] - b[0], a[1] - b[1]], dtype=complex) / (2 * step)
                J[:, k] = [d[0].real, d[0].imag, d[1].real, d[1].imag]
            return J
        j1, j2 = central(h), central(h / 2)
        return j2 + (j2 - j1) / 3

    def __repr__(self):
        return f"{type(self).__name__}({self.spec!r})"


class Rotation(TwistorMap):
    """Lift of the rotation ``z -> exp(i w) z``."""

    def __init__(self, omega: float):
        self.omega = float(omega)
        self.u = complex(math.cos(omega), math.sin(omega))
        self.spec = f"rot:{self.omega!r}"

    def __call__(self, z, mu):
        return self.u * z, self.u * mu

    def wirtinger(self, z, mu):
        return np.array([[self.u, 0, 0, 0], [0, 0, self.u, 0]], dtype=complex)

    def inverse(self):
        return Rotation(-self.omega)


class Translation(TwistorMap):
    def __init__(self, c: complex):
        self.c = complex(c)
        self.spec = f"trans:{self.c.real!r}:{self.c.imag!r}"

    def __call__(self, z, mu):
        return z + self.c, mu

    def inverse(self):
        return Translation(-self.c)


class Antipodal(TwistorMap):
    spec = "antipodal"

    def __call__(self, z, mu):
        return z, -mu

    def wirtinger(self, z, mu):
        return np.array([[1, 0, 0, 0], [0, 0, -1, 0]], dtype=complex)


class Scaling(TwistorMap):
    """Lift of the homothety ``z -> C z`` (``C > 0``)."""

    def __init__(self, c: float):
        if c <= 0:
            raise ConfigError("scaling constant must be positive")
        self.c = float(c)
        self.spec = f"scale:{self.c!r}"

    def __call__(self, z, mu):
        return self.c * z, mu

    def wirtinger(self, z, mu):
        return np.array([[self.c, 0, 0, 0], [0, 0, 1, 0]], dtype=complex)

    def inverse(self):
        return Scaling(1 / self.c)


class Shear(TwistorMap):
    """``(z, mu) -> (z + i s mu / (1 + |mu|^2), mu)``."""

    def __init__(self, s: float):
        self.s = float(s)
        self.spec = f"shear:{self.s!r}"

    def __call__(self, z, mu):
        return z + 1j * self.s * mu / (1 + np.abs(mu) ** 2), mu

    def wirtinger(self, z, mu):
        d = (1 + abs(mu) ** 2) ** 2
        return np.array([[1, 0, 1j * self.s / d, -1j * self.s * mu * mu / d],
                         [0, 0, 1, 0]], dtype=complex)

    def inverse(self):
        return Shear(-self.s)


class ConjugateShear(TwistorMap):
    """Non-example ``(z, mu) -> (z + s conj(mu), mu)``."""

    def __init__(self, s: float):
        self.s = float(s)
        self.spec = f"badshear:{self.s!r}"

    def __call__(self, z, mu):
        return z + self.s * np.conj(mu), mu

    def wirtinger(self, z, mu):
        return np.array([[1, 0, 0, self.s], [0, 0, 1, 0]], dtype=complex)

    def inverse(self):
        return ConjugateShear(-self.s)


class Composite(TwistorMap):
    """Apply ``maps`` left to right."""

    def __init__(self, maps):
        self.maps = list(maps)
        self.spec = ",".join(m.spec for m in self.maps)

    def __call__(self, z, mu):
        for m in self.maps:
            z, mu = m(z, mu)
        return z, mu

    def jacobian(self, p: TwistorPoint) -> np.ndarray:
        J = np.eye(4)
        for m in self.maps:
            J = m.jacobian(p) @ J
            p = m.apply(p)
        return J

    def wirtinger(self, z, mu):
        raise NotImplementedError("composites carry real Jacobians only")

    def inverse(self):
        return Composite([m.inverse() for m in reversed(self.maps)])


CATALOG_BIHOLOMORPHISMS = ("id", "rot", "trans", "antipodal", "scale", "shear")
CATALOG_NON_EXAMPLES = ("badshear",)


def parse_map(spec: str) -> TwistorMap:
    """``shear:0.7``, ``antipodal``, ``rot:0.5``, ``trans:x:y``, ``scale:C``,
    ``badshear:0.5``, ``id``; comma-separated specs compose left to right."""
    spec = spec.strip().lower()
    if "," in spec:
        return Composite(parse_map(s) for s in spec.split(","))
    head, *rest = spec.split(":")
    try:
        args = [float(a) for a in rest]
        if head == "id" and not args:
            return TwistorMap()
        if head == "antipodal" and not args:
            return Antipodal()
        if head == "rot":
            return Rotation(*args)
        if head == "trans":
            return Translation(complex(*args))
        if head == "scale":
            return Scaling(*args)
        if head == "shear":
            return Shear(*args)
        if head == "badshear":
            return ConjugateShear(*args)
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"unknown twistor map spec {spec!r}")


def holomorphy_residual(phi: TwistorMap, p: TwistorPoint, jacobian: str = "analytic") -> float:
    """Largest normalized component of ``dPhi(W1), dPhi(W2)`` off the structure at ``Phi(p)``."""
    J = phi.jacobian(p) if jacobian == "analytic" else phi.fd_jacobian(p)
    q = phi.apply(p)
    target = dbar_frame(q).T
    worst = 0.0
    for w in dbar_frame(p):
        pushed = J @ w
        norm = np.linalg.norm(pushed)
        if norm == 0:
            continue
        coef, *_ = np.linalg.lstsq(target, pushed, rcond=None)
        worst = max(worst, float(np.linalg.norm(pushed - target @ coef) / norm))
    return worst


def random_twistor_points(rng: np.random.Generator, n: int, boundary_fraction: float = 0.3,
                          radius: float = 1.0) -> list[TwistorPoint]:
    """Points with ``|z| <= radius``; a fraction lies on ``|mu| = 1``."""
    pts = []
    for i in range(n):
        z = radius * math.sqrt(rng.uniform()) * complex(np.exp(1j * rng.uniform(0, 2 * np.pi)))
        r = 1.0 if rng.uniform() < boundary_fraction else math.sqrt(rng.uniform())
        pts.append(TwistorPoint(z, r * complex(np.exp(1j * rng.uniform(0, 2 * np.pi)))))
    return pts


# holomorphic functions generated by f1 = mu and f2 = z - mu^2 conj(z)

@dataclass
class HolomorphicFunctionEuclid:
    """``sum c_ij mu^i (z - mu^2 conj z)^j`` with ``terms = {(i, j): c_ij}``."""

    terms: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        self.terms = {tuple(k): complex(v) for k, v in self.terms.items() if v != 0}
        if any(len(k) != 2 or min(k) < 0 or any(int(e) != e for e in k) for k in self.terms):
            raise ConfigError("exponents (i, j) must be non-negative integers")
        pts = [(0.3 - 0.2j, 0.5j), (-0.7 + 0.1j, 0.8 + 0.6j), (0.1j, -0.2 + 0.1j)]
        res = max(self.dbar_residual(z, mu) for z, mu in pts)
        if res >= 1e-12:
            raise AssertionError(f"generated function not annihilated (residual {res:.2e})")

    def __call__(self, z, mu):
        z = np.asarray(z, dtype=complex)
        mu = np.asarray(mu, dtype=complex)
        f2 = z - mu * mu * np.conj(z)
        out = np.zeros(np.broadcast(z, mu).shape, dtype=complex)
        for (i, j), c in self.terms.items():
            out = out + c * mu ** i * f2 ** j
        return out

    def wirtinger(self, z, mu):
        """``(d/dz, d/dzbar, d/dmu, d/dmubar)`` by the chain rule through ``f1, f2``."""
        f2 = z - mu * mu * np.conj(z)
        df1 = (0, 0, 1, 0)
        df2 = (1, -mu * mu, -2 * mu * np.conj(z), 0)
        out = [0j, 0j, 0j, 0j]
        for (i, j), c in self.terms.items():
            p1 = c * i * mu ** (i - 1) * f2 ** j if i else 0
            p2 = c * j * mu ** i * f2 ** (j - 1) if j else 0
            for k in range(4):
                out[k] = out[k] + p1 * df1[k] + p2 * df2[k]
        return tuple(out)

    def dbar_residual(self, z, mu) -> float:
        dz, dzb, dm, dmb = self.wirtinger(z, mu)
        return float(max(abs(dzb + mu * mu * dz), abs(dmb)))

    def fd_dbar_residual(self, z, mu, h: float = 1e-5) -> float:
        """Same residual with Wirtinger derivatives by central differences."""
        def d(dx):
            return (self(z + dx[0], mu + dx[1]) - self(z - dx[0], mu - dx[1])) / (2 * h)
        dzb = 0.5 * (d((h, 0)) + 1j * d((1j * h, 0)))
        dz = 0.5 * (d((h, 0)) - 1j * d((1j * h, 0)))
        dmb = 0.5 * (d((0, h)) + 1j * d((0, 1j * h)))
        return float(max(abs(dzb + mu * mu * dz), abs(dmb)))


def _poly_terms(coeffs, mu_power: int) -> dict:
    return {(mu_power, k): c for k, c in enumerate(coeffs)}


def pestov_uhlmann_euclid(h_coeffs) -> HolomorphicFunctionEuclid:
    """``f = h(z - mu^2 conj z)`` for the polynomial ``h(z) = sum h_k z^k``; ``f(z, 0) = h(z)``."""
    f = HolomorphicFunctionEuclid(_poly_terms(h_coeffs, 0), f"h={list(h_coeffs)}")
    for z in (0.2 + 0.1j, -0.5j, 0.9):
        hz = np.polynomial.polynomial.polyval(z, np.asarray(h_coeffs, dtype=complex))
        if abs(f(z, 0) - hz) > 1e-12:
            raise AssertionError("zero-section restriction differs from h")
    return f


def pestov_uhlmann_oneform_euclid(a_coeffs) -> HolomorphicFunctionEuclid:
    """``f = mu a(z - mu^2 conj z)``: odd in ``mu`` with fibre-linear coefficient ``a(z)``."""
    f = HolomorphicFunctionEuclid(_poly_terms(a_coeffs, 1), f"a={list(a_coeffs)}")
    for z, mu in ((0.2 + 0.1j, 0.3 - 0.4j), (-0.5j, 1.0), (0.9, 0.7j)):
        if f(z, -mu) != -f(z, mu):
            raise AssertionError("not odd in mu")
        az = np.polynomial.polynomial.polyval(z, np.asarray(a_coeffs, dtype=complex))
        if abs(f.wirtinger(z, 0j)[2] - az) > 1e-12:
            raise AssertionError("fibre-linear coefficient differs from a(z)")
    return f


@dataclass(frozen=True)
class InvariantExtensionReport:
    probe: complex
    max_negative: float
    relative_negative: float
    holomorphic: bool
    dominant_modes: list
    transport_residual: float


def invariant_extension_check(m: ConformalMetric, data, probes, n: int = 32,
                              tol: float = 1e-8, h: float = 1e-3) -> list[InvariantExtensionReport]:
    """Transport boundary data along orbits and test fibrewise holomorphy.

    ``data(z_exit, mu_exit)`` gives the boundary value at the exit ray; it may be a
    :class:`HolomorphicFunctionEuclid`.  At each probe ``x`` the fibre
    ``theta -> u(x, theta)`` is sampled on ``2n+1`` nodes.  ``transport_residual``
    is ``|u(phi_h(x, theta)) - u(x, theta)| / h`` maximised over the fibre.
    """
    F = ThermostatField(m)
    theta = FourierSeries.nodes(n)
    reports = []

    def u_at(y):
        tr = integrate(F, y)
        ye = tr.exit_state
        return complex(data(complex(ye[0], ye[1]) / math.hypot(ye[0], ye[1]),
                            complex(math.cos(ye[2]), math.sin(ye[2]))))

    for x in probes:
        x = complex(x)
        vals, drift = [], 0.0
        for th in theta:
            y = np.array([x.real, x.imag, th])
            u0 = u_at(y)
            vals.append(u0)
            if len(vals) <= 3:
                drift = max(drift, abs(u_at(flow_map(F, y, h)) - u0) / h)
        fs = FourierSeries.from_samples(np.array(vals), check_decay=False)
        v = is_fibrewise_holomorphic(fs, tol)
        mags = np.abs(fs.coefficients)
        dom = sorted(int(k) for k in fs.modes[mags > 1e-8 * max(mags.max(), 1e-300)])
        reports.append(InvariantExtensionReport(x, v.max_negative, v.relative, v.holomorphic,
                                                dom[:8], drift))
    return reports


# necessary conditions on SM for maps between unit circle bundles of conformal disks

class SMMap:
    """Map on SM in coordinates ``(x1, x2, theta)``."""

    spec = "id"

    def __call__(self, y):
        return np.asarray(y, dtype=float).copy()

    def jacobian(self, y, h: float = 1e-5) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        J = np.empty((3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            J[:, k] = (self(y + e) - self(y - e)) / (2 * h)
        return J


class SMRotation(SMMap):
    def __init__(self, omega: float):
        self.omega = float(omega)
        self.spec = f"rot:{self.omega!r}"

    def __call__(self, y):
        c, s = math.cos(self.omega), math.sin(self.omega)
        return np.array([c * y[0] - s * y[1], s * y[0] + c * y[1], y[2] + self.omega])


class SMAntipodal(SMMap):
    spec = "antipodal"

    def __call__(self, y):
        return np.array([y[0], y[1], y[2] + math.pi])


class SMRescale(SMMap):
    """``sc_sigma(x, v) = (x, exp(-sigma) v)``: the identity in ``(x, theta)`` coordinates."""

    spec = "sc"


class SMTimeChange(SMMap):
    def __init__(self, m: ConformalMetric, tau: TimeFunction):
        self.F = ThermostatField(m)
        self.tau = tau
        self.spec = f"timechange:{tau.kind}:{tau.s!r}"

    def __call__(self, y):
        return flow_map(self.F, y, self.tau.jet(y)[0])


@dataclass(frozen=True)
class OrbitEquivalenceReport:
    x_transverse: float   # |(H', V')-part of phi_* X| / |phi_* X|
    v_horizontal: float   # |H'-part of phi_* V| / |phi_* V|
    x_sign: int


def orbit_equivalence_conditions(m1: ConformalMetric, m2: ConformalMetric, phi: SMMap,
                                 probes) -> list[OrbitEquivalenceReport]:
    """Check ``phi_* X in R X'`` and ``phi_* V in R X' + R V'`` at probe points."""
    out = []
    for y in probes:
        y = np.asarray(y, dtype=float)
        J = phi.jacobian(y)
        X, _, V = frame_vectors(m1, y)
        basis = frame_vectors(m2, phi(y)).T
        cx = np.linalg.solve(basis, J @ X)
        cv = np.linalg.solve(basis, J @ V)
        out.append(OrbitEquivalenceReport(float(np.hypot(cx[1], cx[2]) / np.linalg.norm(cx)),
                                          float(abs(cv[1]) / np.linalg.norm(cv)),
                                          1 if cx[0] > 0 else -1))
    return out


def parse_sm_map(spec: str, m1: ConformalMetric | None = None) -> SMMap:
    spec = spec.strip().lower()
    head, _, rest = spec.partition(":")
    if head == "id":
        return SMMap()
    if head == "rot":
        return SMRotation(float(rest))
    if head == "antipodal":
        return SMAntipodal()
    if head == "sc":
        return SMRescale()
    if head == "timechange":
        return SMTimeChange(m1 or ConformalMetric(), TimeFunction.parse(rest))
    raise ConfigError(f"unknown SM map spec {spec!r}")
