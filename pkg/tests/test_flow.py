import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistorlab.errors import ConfigError, NonTransversalExit
from twistorlab.flow import (GLANCING_BAND, LambdaField, ScatteringTable, ThermostatField,
                             TimeFunction, angle_distance, chord_scattering, default_grid,
                             flow_map, integrate, scattering, scattering_table, time_change_check,
                             worker_count)
from twistorlab.geometry import BoundaryRay, ConformalMetric, PhasePoint, sasaki_matrix

EUCLID = ThermostatField(ConformalMetric())


def test_lambda_parse_round_trip():
    for spec in ("zero", "const:0.25", "conformal:linreal:0.1", "conformal:bump:0.3:0.5"):
        lam = LambdaField.parse(spec)
        assert LambdaField.parse(lam.spec) == lam
    with pytest.raises(ConfigError):
        LambdaField.parse("magnetic:1")


def test_conformal_lambda_value():
    # lam = dsigma'(v^perp) with v = exp(-sigma) (cos, sin)
    F = ThermostatField.parse("zero", "conformal:linreal:0.1")
    for th in (0.0, 0.4, 2.0):
        lam, h_lam, v_lam = F.lam_derivatives(np.array([0.2, 0.3, th]))
        assert lam == pytest.approx(-0.1 * math.sin(th), abs=1e-15)
        assert v_lam == pytest.approx(-0.1 * math.cos(th), abs=1e-15)


def test_zero_lambda_reduces_to_geodesic_field():
    F = ThermostatField.parse("bump:0.3:0.5")
    y = np.array([0.1, -0.4, 1.3])
    from twistorlab.geometry import frame_vectors
    np.testing.assert_allclose(F.vector(y), frame_vectors(F.metric, y)[0])


# ---------------------------------------------------------------- integrate

def test_integrate_from_center():
    tr = integrate(EUCLID, PhasePoint(0, 0, 0))
    assert tr.exit_time == pytest.approx(1.0, abs=1e-12)
    assert tr.exit_ray.beta == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diff(tr.t) > 0)
    np.testing.assert_allclose(tr.y[:, 1], 0, atol=1e-14)


def test_integrate_inward_normal():
    tr = integrate(EUCLID, PhasePoint(1, 0, math.pi))
    assert tr.exit_time == pytest.approx(2.0, abs=1e-12)
    assert tr.exit_ray.beta == pytest.approx(math.pi, abs=1e-12)


def test_trajectory_invariants_bump():
    F = ThermostatField.parse("bump:0.3:0.5")
    tr = integrate(F, PhasePoint(0.3, -0.2, 2.0))
    assert np.all(np.hypot(tr.y[:, 0], tr.y[:, 1]) <= 1 + 1e-12)
    assert math.hypot(*tr.exit_state[:2]) == pytest.approx(1.0, abs=1e-10)
    # |v|_g = 1 holds by construction; check the flow stays tangent to SM via the dense output
    for t in np.linspace(0, tr.exit_time, 11):
        y = tr.dense(t)
        xdot = F.vector(y)[:2]
        s = float(F.metric.sigma.value(y[0], y[1]))
        assert math.exp(2 * s) * float(xdot @ xdot) == pytest.approx(1.0, abs=1e-9)
    assert [s[0] for s in tr.samples] == list(tr.t)


def test_nontransversal_exit(monkeypatch):
    # exact tangency is not representable in floating point; a shallow exit is
    # flagged once the transversality threshold exceeds |d/dt |x|^2| = 2 sin(gamma)
    import twistorlab.flow as flow
    p0 = BoundaryRay(0.0, 1e-3).to_phase_point()
    assert integrate(EUCLID, p0).exit_time == pytest.approx(2 * math.sin(1e-3), abs=1e-12)
    monkeypatch.setattr(flow, "TRANSVERSALITY_TOL", 1e-2)
    with pytest.raises(NonTransversalExit):
        integrate(EUCLID, p0)


def test_backward_integration():
    tr = integrate(EUCLID, PhasePoint(0, 0, 0), backward=True)
    assert tr.exit_ray.beta == pytest.approx(math.pi, abs=1e-12)
    assert np.all(np.diff(tr.t) > 0)


# ---------------------------------------------------------------- scattering

def test_scattering_inward_normal():
    r = scattering(EUCLID, BoundaryRay(0.0, math.pi / 2))
    assert r.ray.beta == pytest.approx(math.pi, abs=1e-12)
    assert r.ray.gamma == pytest.approx(-math.pi / 2, abs=1e-12)
    assert r.tau_tilde == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("gamma", [0.0, math.pi, 0.5 * GLANCING_BAND])
def test_scattering_glancing_is_identity(gamma):
    ray = BoundaryRay(1.2, gamma)
    r = scattering(EUCLID, ray)
    assert r.ray == ray and r.tau_tilde == 0.0


@given(st.floats(0, 2 * math.pi), st.floats(1e-3, math.pi - 1e-3))
@settings(max_examples=40, deadline=None)
def test_euclidean_scattering_matches_chord(beta, gamma):
    ray = BoundaryRay(beta, gamma)
    r = scattering(EUCLID, ray)
    ref, tau = chord_scattering(ray)
    assert angle_distance(r.ray.beta, ref.beta) < 1e-8
    assert angle_distance(r.ray.gamma, ref.gamma) < 1e-8
    assert r.tau_tilde == pytest.approx(tau, abs=1e-8)
    assert r.tau_tilde == pytest.approx(2 * math.sin(gamma), abs=1e-8)


def test_outward_ray_negative_time():
    r = scattering(EUCLID, BoundaryRay(0.4, -1.0))
    assert r.tau_tilde == pytest.approx(-2 * math.sin(1.0), abs=1e-10)
    assert r.ray.is_inward


@pytest.mark.parametrize("spec", ["linreal:0.1", "bump:0.3:0.5"])
def test_involution_and_reversibility(spec):
    F = ThermostatField.parse(spec)
    for beta, gamma in [(0.3, 0.7), (2.0, 2.5), (4.4, 1.6)]:
        out = scattering(F, BoundaryRay(beta, gamma)).ray
        back = scattering(F, out).ray
        assert angle_distance(back.beta, beta) < 1e-6 and angle_distance(back.gamma, gamma) < 1e-6
        # reversing the exit vector (gamma + pi) retraces the orbit
        rev = scattering(F, BoundaryRay(out.beta, math.pi + out.gamma)).ray
        assert angle_distance(rev.beta, beta) < 1e-6
        assert angle_distance(rev.gamma, math.pi + gamma) < 1e-6


def test_thermostat_not_reversible():
    F = ThermostatField.parse("zero", "const:0.5")
    out = scattering(F, BoundaryRay(0.3, 1.0)).ray
    rev = scattering(F, BoundaryRay(out.beta, math.pi + out.gamma)).ray
    assert angle_distance(rev.beta, 0.3) > 1e-3


def test_step_refinement():
    F = ThermostatField.parse("bump:0.3:0.5", "conformal:linreal:0.1")
    for beta, gamma in [(0.5, 0.4), (3.0, 1.9)]:
        a = scattering(F, BoundaryRay(beta, gamma), rtol=1e-11, atol=1e-11).tau_tilde
        b = scattering(F, BoundaryRay(beta, gamma), rtol=5e-12, atol=5e-12).tau_tilde
        assert abs(a - b) < 1e-8


# ---------------------------------------------------------------- tables

def test_table_shape_and_invariants():
    tab = scattering_table(EUCLID, 8, 6, workers=1)
    assert tab.shape == (8, 6) and len(tab) == 48
    assert np.all(np.sin(tab.gamma_out) < 0)
    assert np.all(tab.tau_tilde > 0)
    assert set(tab.status.ravel()) == {"ok"}


def test_table_constant_metric_scales_time():
    a = scattering_table(EUCLID, 4, 5, workers=1)
    b = scattering_table(ThermostatField.parse("const:0.3"), 4, 5, workers=1)
    np.testing.assert_allclose(b.tau_tilde, math.exp(0.3) * a.tau_tilde, rtol=1e-10)


def test_table_csv_json_round_trip(tmp_path):
    tab = scattering_table(ThermostatField.parse("linreal:0.1"), 3, 4, workers=1)
    text = tab.to_csv(tmp_path / "t.csv")
    assert text.splitlines()[0] == "beta,gamma,beta_out,gamma_out,tau_tilde,status"
    back = ScatteringTable.from_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.tau_tilde, tab.tau_tilde)
    again = ScatteringTable.from_json(tab.to_json())
    np.testing.assert_array_equal(again.gamma_out, tab.gamma_out)
    assert again.field_spec == {"metric": "linreal:0.1", "lambda": "zero"}


def test_table_independent_of_workers():
    F = ThermostatField.parse("bump:0.3:0.5")
    a = scattering_table(F, 4, 3, workers=1)
    b = scattering_table(F, 4, 3, workers=2)
    np.testing.assert_array_equal(a.beta_out, b.beta_out)
    np.testing.assert_array_equal(a.tau_tilde, b.tau_tilde)


def test_default_grid_avoids_glancing():
    beta, gamma = default_grid(4, 3)
    np.testing.assert_allclose(beta, [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    np.testing.assert_allclose(gamma, [math.pi / 6, math.pi / 2, 5 * math.pi / 6])


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("TWISTORLAB_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("TWISTORLAB_THREADS", "many")
    with pytest.raises(ConfigError):
        worker_count()


# ---------------------------------------------------------------- time changes

def test_time_change_zero():
    rep = time_change_check(ConformalMetric(), TimeFunction(), np.array([0.2, 0.1, 0.3]))
    assert rep.factor_residual < 1e-10 and rep.transverse_residual < 1e-10


@pytest.mark.parametrize("spec", ["quad:0.01", "quad:0.05", "quadcos:0.05"])
def test_time_change_factor(spec):
    tau = TimeFunction.parse(spec)
    rng = np.random.default_rng(5)
    for metric in ("zero", "bump:0.3:0.5"):
        m = ConformalMetric.parse(metric)
        for _ in range(10):
            r = 0.8 * math.sqrt(rng.uniform())
            ph, th = rng.uniform(0, 2 * math.pi, 2)
            rep = time_change_check(m, tau, np.array([r * math.cos(ph), r * math.sin(ph), th]))
            assert rep.factor_residual < 1e-4
            assert rep.transverse_residual < 1e-4
            assert rep.q == pytest.approx(1 / rep.one_plus_x_tau, rel=1e-4)


def test_flow_map_group_property():
    F = ThermostatField.parse("bump:0.3:0.5", "const:0.2")
    y = np.array([0.1, 0.2, 0.3])
    np.testing.assert_allclose(flow_map(F, flow_map(F, y, 0.3), -0.3), y, atol=1e-11)
    np.testing.assert_allclose(flow_map(F, flow_map(F, y, 0.1), 0.2), flow_map(F, y, 0.3), atol=1e-11)


def test_sasaki_norm_of_flow_vector():
    F = ThermostatField.parse("linreal:0.1")
    y = np.array([0.4, -0.1, 0.9])
    v = F.vector(y)
    assert float(v @ sasaki_matrix(F.metric, y) @ v) == pytest.approx(1.0, abs=1e-12)
