import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistorlab.errors import ConfigError
from twistorlab.geometry import (BoundaryRay, ConformalFactor, ConformalMetric, PhasePoint,
                                 boundary_geometry, boundary_length, connection_difference,
                                 curvature, frame_vectors, rescaled_metric, sasaki_matrix,
                                 structure_residuals, wrap_angle)

PRESETS = ["zero", "const:0.3", "linreal:0.1", "bump:0.3:0.5", "poly:0.1:0.2:-0.1:0.05:0.1:-0.2",
           "constcurv:-2", "constcurv:1.5"]

angles = st.floats(-20, 20, allow_nan=False)


def random_points(rng, n, radius=1.0):
    r = radius * np.sqrt(rng.uniform(size=n))
    ph, th = rng.uniform(0, 2 * np.pi, (2, n))
    return np.column_stack([r * np.cos(ph), r * np.sin(ph), th])


def fd_sigma_derivatives(sig, x1, x2, h=1e-4):
    f = sig.value
    s1 = (f(x1 + h, x2) - f(x1 - h, x2)) / (2 * h)
    s2 = (f(x1, x2 + h) - f(x1, x2 - h)) / (2 * h)
    lap = (f(x1 + h, x2) + f(x1 - h, x2) + f(x1, x2 + h) + f(x1, x2 - h) - 4 * f(x1, x2)) / h**2
    return float(s1), float(s2), float(lap)


# ---------------------------------------------------------------- presets

@pytest.mark.parametrize("spec", PRESETS)
def test_spec_round_trip(spec):
    sig = ConformalFactor.parse(spec)
    assert ConformalFactor.parse(sig.spec) == sig


@pytest.mark.parametrize("spec", PRESETS)
def test_jet_matches_finite_differences(spec):
    sig = ConformalFactor.parse(spec)
    for x1, x2 in [(0.1, -0.3), (0.6, 0.5), (-0.9, 0.2)]:
        _, (s1, s2), (s11, _, s22) = sig.jet(x1, x2)
        f1, f2, lap = fd_sigma_derivatives(sig, x1, x2)
        assert s1 == pytest.approx(f1, abs=1e-7)
        assert s2 == pytest.approx(f2, abs=1e-7)
        assert s11 + s22 == pytest.approx(lap, abs=1e-5)


def test_zero_preset_is_identically_zero():
    v, g, h = ConformalFactor().jet(np.linspace(-1, 1, 5), 0.3)
    assert np.all(v == 0) and all(np.all(c == 0) for c in g + h)


@pytest.mark.parametrize("spec", ["foo", "bump:1", "bump:1:0", "const:x", "constcurv:-4",
                                  "poly:" + ":".join(["1"] * 16)])
def test_bad_specs_rejected(spec):
    with pytest.raises(ConfigError):
        ConformalFactor.parse(spec)


def test_combination_jet():
    a, b = ConformalFactor.parse("bump:0.3:0.5"), ConformalFactor.parse("linreal:0.2")
    c = a.plus(b, 2.0)
    assert c.value(0.3, 0.1) == pytest.approx(a.value(0.3, 0.1) + 2 * b.value(0.3, 0.1))
    assert (a - a).gradient(0.2, 0.4) == (0.0, 0.0)
    # exp(1 * sigma_b) g adds sigma_b / 2 to the factor
    m = rescaled_metric(ConformalMetric(a), b, 1.0)
    assert m.sigma.value(0.5, 0.0) == pytest.approx(a.value(0.5, 0.0) + 0.05)


# ---------------------------------------------------------------- coordinates

@given(angles)
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_phase_point_rejects_outside():
    PhasePoint(1.0 + 1e-13, 0.0, 0.0)
    with pytest.raises(ValueError):
        PhasePoint(1.0 + 1e-9, 0.0, 0.0)
    assert PhasePoint(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)


@given(st.floats(0, 2 * math.pi, exclude_max=True), st.floats(-math.pi, math.pi))
def test_boundary_ray_round_trip(beta, gamma):
    ray = BoundaryRay(beta, gamma)
    back = BoundaryRay.from_phase_point(ray.to_phase_point())
    assert abs(math.remainder(back.beta - ray.beta, 2 * math.pi)) < 1e-12
    assert abs(math.remainder(back.gamma - ray.gamma, 2 * math.pi)) < 1e-12


def test_boundary_ray_classification():
    assert BoundaryRay(0.3, 1.0).is_inward
    assert BoundaryRay(0.3, -1.0).is_outward
    g = BoundaryRay(0.3, math.pi)
    assert g.is_glancing and not g.is_inward and not g.is_outward
    assert BoundaryRay(1.0, 0.0).is_glancing


@pytest.mark.parametrize("spec", PRESETS)
@given(beta=st.floats(0, 2 * math.pi), gamma=st.floats(-math.pi, math.pi))
@settings(max_examples=25)
def test_boundary_parametrization_is_unit(spec, beta, gamma):
    m = ConformalMetric.parse(spec)
    bg = boundary_geometry(m, beta)
    v = math.cos(gamma) * bg.nu_perp + math.sin(gamma) * bg.nu
    x = (math.cos(beta), math.sin(beta))
    assert float(m.matrix(*x)) * float(v @ v) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- frame

def test_frame_flat():
    X, H, V = frame_vectors(ConformalMetric(), PhasePoint(0.2, 0.1, 0.7))
    c, s = math.cos(0.7), math.sin(0.7)
    np.testing.assert_allclose(X, [c, s, 0], atol=1e-15)
    np.testing.assert_allclose(H, [-s, c, 0], atol=1e-15)
    np.testing.assert_allclose(V, [0, 0, 1])


def test_frame_constant_scaling():
    X = frame_vectors(ConformalMetric.parse("const:0.4"), PhasePoint(0.2, 0.1, 0.7))[0]
    np.testing.assert_allclose(X, math.exp(-0.4) * np.array([math.cos(0.7), math.sin(0.7), 0]))


def test_frame_linreal_theta_component():
    m = ConformalMetric.parse("linreal:0.1")
    assert frame_vectors(m, PhasePoint(0, 0, 0))[0][2] == 0.0
    assert frame_vectors(m, PhasePoint(0, 0, math.pi / 2))[0][2] == pytest.approx(-0.1, abs=1e-15)


def test_frame_broadcasts():
    y = random_points(np.random.default_rng(0), 7)
    F = frame_vectors(ConformalMetric.parse("bump:0.3:0.5"), y)
    assert F.shape == (7, 3, 3)
    np.testing.assert_allclose(F[3], frame_vectors(ConformalMetric.parse("bump:0.3:0.5"), y[3]))


def _fd_bracket(m, y, A_idx, B_idx, h=1e-5):
    # independent oracle: Jacobians of the frame fields by central differences
    def jac(idx):
        J = np.empty((3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            J[:, k] = (frame_vectors(m, y + e)[idx] - frame_vectors(m, y - e)[idx]) / (2 * h)
        return J
    A, B = frame_vectors(m, y)[A_idx], frame_vectors(m, y)[B_idx]
    return jac(B_idx) @ A - jac(A_idx) @ B


@pytest.mark.parametrize("spec", PRESETS)
def test_structure_equations(spec):
    m = ConformalMetric.parse(spec)
    for y in random_points(np.random.default_rng(1), 200):
        r = structure_residuals(m, y)
        assert np.max(np.abs(r["VX"] - r["H"])) < 1e-12
        assert np.max(np.abs(r["VH"] + r["X"])) < 1e-12
        # with H = [V, X] the third equation carries +K
        assert np.max(np.abs(r["XH"] - r["K"] * r["V"])) < 1e-10


@pytest.mark.parametrize("spec", ["bump:0.3:0.5", "constcurv:1.5"])
def test_analytic_brackets_match_fd(spec):
    m = ConformalMetric.parse(spec)
    for y in random_points(np.random.default_rng(2), 20, 0.9):
        r = structure_residuals(m, y)
        np.testing.assert_allclose(r["XH"], _fd_bracket(m, y, 0, 1), atol=1e-8)
        np.testing.assert_allclose(r["VX"], _fd_bracket(m, y, 2, 0), atol=1e-8)


@pytest.mark.parametrize("spec", PRESETS)
def test_sasaki_orthonormal(spec):
    m = ConformalMetric.parse(spec)
    for y in random_points(np.random.default_rng(3), 50):
        F = frame_vectors(m, y)
        np.testing.assert_allclose(F @ sasaki_matrix(m, y) @ F.T, np.eye(3), atol=1e-10)


# ---------------------------------------------------------------- curvature

def test_curvature_flat_and_constant():
    for spec in ("zero", "const:-0.7", "linreal:0.3"):
        assert np.all(curvature(ConformalMetric.parse(spec), np.array([0.0, 0.5]), 0.2) == 0)


@pytest.mark.parametrize("k", [-2.0, 0.5, 1.5])
def test_curvature_constcurv(k):
    m = ConformalMetric.parse(f"constcurv:{k}")
    np.testing.assert_allclose(curvature(m, np.array([0.0, 0.3, -0.8]), 0.4), k, rtol=1e-12)


def test_curvature_bump_center_against_fd_laplacian():
    m = ConformalMetric.parse("bump:0.3:0.5")
    _, _, lap = fd_sigma_derivatives(m.sigma, 0.0, 0.0)
    expected = -math.exp(-2 * float(m.sigma.value(0, 0))) * lap
    assert float(curvature(m, 0.0, 0.0)) == pytest.approx(expected, abs=1e-6)


# ---------------------------------------------------------------- boundary

def test_boundary_geometry_flat():
    for beta in (0.0, 1.1, 4.0):
        bg = boundary_geometry(ConformalMetric(), beta)
        np.testing.assert_allclose(bg.nu, [-math.cos(beta), -math.sin(beta)], atol=1e-15)
        np.testing.assert_allclose(bg.nu_perp, [-math.sin(beta), math.cos(beta)], atol=1e-15)
        assert bg.second_fundamental_form == pytest.approx(1.0, abs=1e-14)


def test_boundary_geometry_constant():
    assert boundary_geometry(ConformalMetric.parse("const:0.3"), 2.0).second_fundamental_form == \
        pytest.approx(math.exp(-0.3), abs=1e-14)


def _fd_geodesic_curvature(m, beta, h=1e-4):
    # oracle: geodesic curvature of the unit circle under exp(2 sigma)|dx|^2 is
    # exp(-sigma) (1 + d sigma / dr), radial derivative by central differences
    f = lambda r: float(m.sigma.value(r * math.cos(beta), r * math.sin(beta)))
    return math.exp(-f(1.0)) * (1 + (f(1 + h) - f(1 - h)) / (2 * h))


@pytest.mark.parametrize("spec", PRESETS)
def test_second_fundamental_form_against_fd(spec):
    m = ConformalMetric.parse(spec)
    for beta in np.linspace(0, 2 * np.pi, 9):
        assert boundary_geometry(m, beta).second_fundamental_form == pytest.approx(
            _fd_geodesic_curvature(m, beta), abs=1e-5)


def test_boundary_length():
    assert boundary_length(ConformalMetric()) == pytest.approx(2 * math.pi)
    assert boundary_length(ConformalMetric.parse("const:0.5")) == pytest.approx(2 * math.pi * math.exp(0.5))


# ---------------------------------------------------------------- connection difference

def test_connection_difference_trivial_cases():
    m = ConformalMetric.parse("bump:0.3:0.5")
    cd = connection_difference(m, m, (0.2, 0.3), (1.0, -0.5))
    assert np.all(cd.christoffel == 0) and np.all(cd.closed_form == 0)
    shifted = ConformalMetric(m.sigma.plus(ConformalFactor.parse("const:0.7")))
    cd = connection_difference(m, shifted, (0.2, 0.3), (1.0, -0.5))
    assert np.max(np.abs(cd.closed_form)) < 1e-15
    assert np.max(np.abs(cd.christoffel)) < 1e-15


def test_connection_difference_linreal_example():
    cd = connection_difference(ConformalMetric(), ConformalMetric.parse("linreal:0.2"), (0, 0), (1, 0))
    # Gamma^1_11 = sigma_1 = 0.2, Gamma^2_11 = -sigma_2 = 0
    np.testing.assert_allclose(cd.christoffel, [0.2, 0.0], atol=1e-15)
    assert cd.difference < 1e-9


@given(st.sampled_from(PRESETS), st.sampled_from(PRESETS), st.floats(0, 0.95), angles,
       st.floats(-3, 3), st.floats(-3, 3))
def test_connection_difference_agrees(s1, s2, r, ph, a, b):
    cd = connection_difference(ConformalMetric.parse(s1), ConformalMetric.parse(s2),
                               (r * math.cos(ph), r * math.sin(ph)), (a, b))
    assert cd.difference < 1e-8 * max(1.0, float(np.max(np.abs(cd.christoffel))))
