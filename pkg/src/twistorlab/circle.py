"""Fourier analysis on the unit circle, Hardy space tests and disk extensions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRatio, NotCircleDiffeo, NotHardy, SpectralDecayError

DEFAULT_N = 256
HARDY_TOL = 1e-8
DECAY_TOL = 1e-8


@dataclass
class FourierSeries:
    """Coefficients ``c_k``, ``-N <= k <= N``, stored in increasing ``k``."""

    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.ndim != 1 or len(self.coefficients) % 2 != 1:
            raise ValueError("need an odd number 2N+1 of coefficients")

    @property
    def n(self) -> int:
        return (len(self.coefficients) - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1)

    def __getitem__(self, k: int) -> complex:
        if abs(k) > self.n:
            return 0j
        return complex(self.coefficients[k + self.n])

    @staticmethod
    def nodes(n: int = DEFAULT_N) -> np.ndarray:
        return 2 * np.pi * np.arange(2 * n + 1) / (2 * n + 1)

    @classmethod
    def from_samples(cls, samples, check_decay: bool = True) -> "FourierSeries":
        """DFT of samples on the ``2N+1`` nodes from :meth:`nodes`."""
        samples = np.asarray(samples, dtype=complex)
        m = len(samples)
        if m % 2 != 1:
            raise ValueError("need samples on an odd number of nodes")
        c = np.fft.fftshift(np.fft.fft(samples)) / m
        fs = cls(c)
        if check_decay:
            fs.check_decay()
        return fs

    @classmethod
    def from_function(cls, f, n: int = DEFAULT_N, check_decay: bool = True) -> "FourierSeries":
        """Sample ``f(mu)`` at ``mu = exp(i t_j)``."""
        return cls.from_samples(f(np.exp(1j * cls.nodes(n))), check_decay)

    def tail(self) -> float:
        """Largest modulus among the two extreme modes relative to the norm."""
        c = self.coefficients
        return float(max(abs(c[0]), abs(c[-1])) / max(self.norm(), 1e-300))

    def check_decay(self, tol: float = DECAY_TOL) -> None:
        if self.tail() >= tol:
            raise SpectralDecayError(
                f"|c_N| / ||c|| = {self.tail():.2e} at N = {self.n}; increase N")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2)))

    def samples(self) -> np.ndarray:
        m = len(self.coefficients)
        return np.fft.ifft(np.fft.ifftshift(self.coefficients)) * m

    def __call__(self, mu):
        """Evaluate ``sum c_k mu^k`` on the circle (``mu^{-k} = conj(mu)^k`` there)."""
        t = np.angle(np.asarray(mu))
        return np.exp(1j * np.multiply.outer(t, self.modes)) @ self.coefficients

    def max_negative(self) -> float:
        return float(np.max(np.abs(self.coefficients[: self.n]), initial=0.0))

    def to_json(self) -> str:
        return json.dumps({"n": self.n,
                           "coefficients": [[float(z.real), float(z.imag)] for z in self.coefficients]})

    @classmethod
    def from_json(cls, text: str) -> "FourierSeries":
        d = json.loads(text)
        fs = cls(np.array([complex(re, im) for re, im in d["coefficients"]]))
        if fs.n != d["n"]:
            raise ValueError("coefficient count does not match n")
        return fs


def hardy_projection(f: FourierSeries) -> FourierSeries:
    """Zero all negative modes."""
    c = f.coefficients.copy()
    c[: f.n] = 0
    return FourierSeries(c)


@dataclass(frozen=True)
class HolomorphyVerdict:
    holomorphic: bool
    max_negative: float
    relative: float


def is_fibrewise_holomorphic(f: FourierSeries, tol: float = HARDY_TOL) -> HolomorphyVerdict:
    """Negative modes below ``tol`` relative to the series norm (absolute if the norm is < 1)."""
    neg = f.max_negative()
    rel = neg / max(f.norm(), 1.0)
    return HolomorphyVerdict(rel < tol, neg, rel)


@dataclass
class DiskExtension:
    """Poisson (harmonic) extension of circle data to the closed disk.

    For Hardy data this is the holomorphic extension ``sum_{k>=0} c_k mu^k``.
    """

    series: FourierSeries

    def _parts(self):
        n = self.series.n
        c = self.series.coefficients
        return c[n:], c[:n][::-1]  # c_0..c_N and c_{-1}..c_{-N}

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=complex)
        pos, neg = self._parts()
        # Horner in mu for the analytic part, in conj(mu) for the anti-analytic part
        out = np.polynomial.polynomial.polyval(mu, pos)
        if np.any(neg):
            out = out + np.conj(mu) * np.polynomial.polynomial.polyval(np.conj(mu), neg)
        return out

    def derivatives(self, mu):
        """Wirtinger derivatives ``(d/dmu, d/dconj(mu))``."""
        mu = np.asarray(mu, dtype=complex)
        pos, neg = self._parts()
        dpos = np.polynomial.polynomial.polyder(pos) if len(pos) > 1 else np.zeros(1)
        d_mu = np.polynomial.polynomial.polyval(mu, dpos)
        if np.any(neg):
            dneg = np.polynomial.polynomial.polyder(np.concatenate([[0], neg]))
            d_bar = np.polynomial.polynomial.polyval(np.conj(mu), dneg)
        else:
            d_bar = np.zeros_like(mu)
        return d_mu, d_bar

    def jacobian(self, mu):
        """Real Jacobian determinant ``|d/dmu|^2 - |d/dconj mu|^2``."""
        d_mu, d_bar = self.derivatives(mu)
        return np.abs(d_mu) ** 2 - np.abs(d_bar) ** 2


def holomorphic_extension(f: FourierSeries, tol: float = HARDY_TOL) -> DiskExtension:
    """Holomorphic extension of Hardy-class circle data.

    Raises
    ------
    NotHardy
        Some negative mode exceeds ``tol`` (relative).
    """
    v = is_fibrewise_holomorphic(f, tol)
    if not v.holomorphic:
        raise NotHardy(f"negative modes up to {v.max_negative:.3e}")
    return DiskExtension(hardy_projection(f))


@dataclass(frozen=True)
class DiskAutomorphism:
    """``mu -> u (mu - a) / (1 - conj(a) mu)``."""

    a: complex = 0j
    u: complex = 1 + 0j

    def __post_init__(self):
        if not abs(self.a) < 1:
            raise ValueError("need |a| < 1")
        if abs(abs(self.u) - 1) > 1e-12:
            raise ValueError("need |u| = 1")

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=complex)
        return self.u * (mu - self.a) / (1 - np.conj(self.a) * mu)

    @classmethod
    def fit(cls, ext: DiskExtension) -> "DiskAutomorphism":
        """Read ``(a, u)`` off an extension: ``Psi'(0) = u(1 - |a|^2)``, ``a = -conj(u) Psi(0)``."""
        d0 = complex(ext.derivatives(0j)[0])
        u = d0 / abs(d0)
        a = -np.conj(u) * complex(ext(0j))
        return cls(complex(a), complex(u))


def _arg_derivative(samples: np.ndarray) -> tuple[np.ndarray, int]:
    m = len(samples)
    steps = np.angle(np.roll(samples, -1) / samples)
    winding = int(round(np.sum(steps) / (2 * np.pi)))
    return steps * m / (2 * np.pi), winding


def check_circle_diffeo(psi: FourierSeries, tol: float = 1e-6) -> None:
    """Raise NotCircleDiffeo unless samples are unimodular with positive, degree-one argument."""
    s = psi.samples()
    if np.max(np.abs(np.abs(s) - 1)) > tol:
        raise NotCircleDiffeo("samples are not on the unit circle")
    d, winding = _arg_derivative(s)
    if winding != 1 or np.min(d) <= 0:
        raise NotCircleDiffeo(f"argument not strictly increasing with degree 1 (degree {winding})")


@dataclass(frozen=True)
class RKCReport:
    is_diffeo_on_disk: bool
    min_jacobian: float


def rkc_check(psi: FourierSeries, n_r: int = 128, n_t: int = 128) -> RKCReport:
    """Harmonic extension of a circle diffeomorphism and its Jacobian on a polar grid.

    The grid has radii ``(i+1)/n_r`` (boundary included) and ``n_t`` angles.
    """
    check_circle_diffeo(psi)
    ext = DiskExtension(psi)
    r = (np.arange(n_r) + 1) / n_r
    t = 2 * np.pi * np.arange(n_t) / n_t
    mu = np.multiply.outer(r, np.exp(1j * t))
    jac = ext.jacobian(mu)
    jmin = float(min(np.min(jac), ext.jacobian(0j)))
    return RKCReport(jmin > 0, jmin)


@dataclass(frozen=True)
class CircleRigidityVerdict:
    fixes_one: bool
    odd: bool
    hardy: bool
    is_identity: bool | None = None
    automorphism: DiskAutomorphism | None = None
    details: dict = field(default_factory=dict)

    @property
    def hypotheses_hold(self) -> bool:
        return self.fixes_one and self.odd and self.hardy

    @property
    def failed(self) -> list[str]:
        names = ("fixes_one", "odd", "hardy")
        return [n for n in names if not getattr(self, n)]


def circlediff_rigidity(psi: FourierSeries, tol: float = 1e-8) -> CircleRigidityVerdict:
    """Test ``psi(1) = 1``, oddness and Hardy membership; when all hold, fit the
    disk automorphism to the extension and decide whether ``psi = Id``."""
    fixes_one = abs(complex(psi(1.0 + 0j)) - 1) < tol
    # odd <=> only odd modes
    k = psi.modes
    even = np.abs(psi.coefficients[k % 2 == 0])
    odd = float(np.max(even, initial=0.0)) < tol
    hv = is_fibrewise_holomorphic(psi, tol)
    details = {"psi(1)": [float(psi(1.0 + 0j).real), float(psi(1.0 + 0j).imag)],
               "max_even_mode": float(np.max(even, initial=0.0)),
               "max_negative_mode": hv.max_negative}
    if not (fixes_one and odd and hv.holomorphic):
        return CircleRigidityVerdict(fixes_one, odd, hv.holomorphic, None, None, details)
    ext = holomorphic_extension(psi, tol)
    aut = DiskAutomorphism.fit(ext)
    ident = abs(aut.a) < 1e-6 and abs(aut.u - 1) < 1e-6
    details["sup_distance_to_identity"] = float(np.max(np.abs(psi.samples() - np.exp(1j * FourierSeries.nodes(psi.n)))))
    return CircleRigidityVerdict(True, True, True, ident, aut, details)


def circle_map_from_argument(arg, n: int = DEFAULT_N) -> FourierSeries:
    """Series of ``exp(i arg(t))`` for a lift ``arg`` of a circle map."""
    t = FourierSeries.nodes(n)
    return FourierSeries.from_samples(np.exp(1j * arg(t)))


@dataclass(frozen=True)
class MoebiusRatioReport:
    a: complex
    b: complex
    max_negative: float
    extendable: bool
    n: int


def moebius_ratio_test(a: complex, b: complex, tol: float = HARDY_TOL,
                       n_max: int = 8192) -> MoebiusRatioReport:
    """Negative modes of ``f(mu) = (a mu + b conj mu) / |a mu + b conj mu|``.

    ``N`` starts at 256 and doubles until the spectrum is resolved.

    Raises
    ------
    DegenerateRatio
        ``||a| - |b|| < 1e-9``.
    """
    if abs(abs(a) - abs(b)) < 1e-9:
        raise DegenerateRatio(f"|a| = |b| = {abs(a):.6g}")

    def f(mu):
        w = a * mu + b * np.conj(mu)
        return w / np.abs(w)

    n = DEFAULT_N
    while True:
        fs = FourierSeries.from_function(f, n, check_decay=False)
        if fs.tail() < DECAY_TOL:
            break
        if n >= n_max:
            raise SpectralDecayError(f"ratio |b/a| = {abs(b / a):.4f} needs N > {n_max}")
        n *= 2
    neg = fs.max_negative()
    return MoebiusRatioReport(complex(a), complex(b), neg, neg < tol, n)
