"""Pusher correctness against closed-form orbits, reversibility, probes,
flow-map volume preservation and the advance loop contracts."""

import io
from math import pi

import numpy as np
import pytest

import magvlasov as mv
from magvlasov.integrator import (
    GuardrailError,
    SolverAbort,
    integrate_analytic,
    probe_to_csv,
)


def single_particle_state(x, v, fields):
    ens = mv.ParticleEnsemble(np.atleast_2d(np.asarray(x, float)),
                              np.atleast_2d(np.asarray(v, float)), [1.0])
    return mv.make_state(ens, fields, probe_indices=[0])


def gyro_fields(t_max=None):
    return mv.FieldModel(mv.b_const([0.0, 0.0, 1.0]), mv.e_frozen("zero"), t_max)


# closed-form gyro orbit for B = (0,0,1), v0 = (1,0,0), x0 = 0:
# V(t) = (cos t, -sin t, 0), X(t) = (sin t, cos t - 1, 0)
def gyro_exact(t):
    return np.array([np.sin(t), np.cos(t) - 1.0, 0.0]), np.array([np.cos(t), -np.sin(t), 0.0])


# ---------------------------------------------------------------- boris

def test_boris_norm_preservation_long_run():
    state = single_particle_state([0, 0, 0], [1, 0, 0], gyro_fields())
    dt = 0.01
    for _ in range(10_000):
        state = mv.step_boris(state, dt)
    speed = np.linalg.norm(state.ensemble.velocities[0])
    assert abs(speed - 1.0) < 1e-12


def test_boris_gyro_orbit_radius_and_period():
    # positions are staggered half a step against velocities, so the orbit
    # is judged geometrically: radius about its own center, phase rate for
    # the period; both much inside O(dt^2)
    state = single_particle_state([0, 0, 0], [1, 0, 0], gyro_fields())
    dt = 0.01
    n = int(round(2 * pi / dt))
    pts = []
    for _ in range(n):
        state = mv.step_boris(state, dt)
        pts.append(state.ensemble.positions[0].copy())
    pts = np.array(pts)
    center = pts.mean(axis=0)
    radii = np.linalg.norm(pts - center, axis=1)
    assert np.max(np.abs(radii - 1.0)) < 1e-3
    phase = np.unwrap(np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0]))
    omega = abs(phase[-1] - phase[0]) / (dt * (n - 1))
    assert abs(2 * pi / omega - 2 * pi) < 1e-3 * 2 * pi
    # velocity rotation itself is angle-exact
    _, vT = gyro_exact(n * dt)
    assert np.linalg.norm(state.ensemble.velocities[0] - vT) < 1e-12


def test_boris_constant_e_exact_velocity():
    fields = mv.FieldModel(mv.b_none(), mv.e_frozen("const", ex=1.0))
    state = single_particle_state([0, 0, 0], [0.5, 0, 0], fields)
    dt = 0.01
    for _ in range(500):
        state = mv.step_boris(state, dt)
    assert state.ensemble.velocities[0, 0] == pytest.approx(0.5 + 5.0, abs=1e-12)
    assert state.ensemble.velocities[0, 1] == 0.0


def test_boris_reversibility_analytic_fields():
    # forward dt then backward -dt must return the state to 1e-12, even for
    # a spatially varying frozen field
    fields = mv.FieldModel(mv.b_const([0.2, 0.1, 1.0]),
                           mv.e_frozen("sin_x1", amplitude=0.5, wavenumber=2.0))
    state0 = single_particle_state([0.3, -0.2, 0.1], [0.7, 0.4, -0.3], fields)
    state = state0
    dt = 0.05
    for _ in range(20):
        state = mv.step_boris(state, dt)
    for _ in range(20):
        state = mv.step_boris(state, -dt)
    assert np.linalg.norm(state.ensemble.positions - state0.ensemble.positions) < 1e-12
    assert np.linalg.norm(state.ensemble.velocities - state0.ensemble.velocities) < 1e-12
    assert state.t == pytest.approx(0.0, abs=1e-15)


def test_guardrail_names_the_product():
    state = single_particle_state([0, 0, 0], [1, 0, 0],
                                  mv.FieldModel(mv.b_const([0, 0, 30.0]), mv.e_frozen("zero")))
    with pytest.raises(GuardrailError, match=r"dt \* \|\|B\|\|_inf"):
        mv.step_boris(state, 0.05)


# ------------------------------------------------------------------ rk4

def test_rk4_energy_error_one_gyro_period():
    state = single_particle_state([0, 0, 0], [1, 0, 0], gyro_fields())
    dt = 0.01
    for _ in range(int(round(2 * pi / dt))):
        state = mv.step_rk4(state, dt)
    speed = np.linalg.norm(state.ensemble.velocities[0])
    assert abs(speed**2 - 1.0) < 1e-9


def test_rk4_fourth_order_convergence():
    fields = gyro_fields()
    errs = []
    for dt in (0.1, 0.05):
        state = single_particle_state([0, 0, 0], [1, 0, 0], fields)
        state = mv.step_rk4(state, dt)
        xT, vT = gyro_exact(dt)
        errs.append(np.linalg.norm(state.ensemble.velocities[0] - vT))
    ratio = errs[0] / errs[1]
    assert 24 < ratio < 40  # one-step local error is O(dt^5): ratio ~ 32


def test_rk4_zero_fields_pure_drift():
    fields = mv.FieldModel(mv.b_none(), mv.e_frozen("zero"))
    state = single_particle_state([1.0, 2.0, 3.0], [0.5, -1.0, 0.25], fields)
    for _ in range(100):
        state = mv.step_rk4(state, 0.01)
    assert np.allclose(state.ensemble.positions[0],
                       [1.0 + 0.5, 2.0 - 1.0, 3.0 + 0.25], atol=1e-12)


# --------------------------------------------------------------- advance

def test_advance_zero_duration_identity():
    state = single_particle_state([0, 0, 0], [1, 0, 0], gyro_fields())
    out, series = mv.advance(state, 0.0, 0.01)
    assert out is state
    assert len(series) == 0


def test_advance_deterministic_byte_identical():
    def run():
        ens = mv.sample_initial(mv.maxwellian_spec(), 200, mv.RngSeed(3))
        fields = mv.FieldModel(mv.b_const([0, 0, 1.0]), mv.e_direct(0.05))
        state = mv.make_state(ens, fields, mv.select_probes(ens, fields, 4, 4, 3))
        _, series = mv.advance(state, 0.05, 1e-3, mv.DiagnosticsSettings(cadence=10))
        buf = io.StringIO()
        series.to_csv(buf)
        return buf.getvalue()

    assert run() == run()


def test_probe_matches_particle_bit_for_bit():
    ens = mv.sample_initial(mv.maxwellian_spec(), 64, mv.RngSeed(5))
    fields = mv.FieldModel(mv.b_const([0, 0, 1.0]), mv.e_direct(0.05))
    idx = 7
    state = mv.make_state(ens, fields, probe_indices=[idx])
    n_steps = 20
    dt = 1e-3
    end, _ = mv.advance(state, n_steps * dt, dt)
    probe = end.probes[0]
    # replay the same trajectory with the public stepper
    replay = mv.make_state(ens, fields)
    path = [replay.ensemble.positions[idx].copy()]
    for _ in range(n_steps):
        replay = mv.step_boris(replay, dt)
        path.append(replay.ensemble.positions[idx].copy())
    assert np.array_equal(probe.positions, np.array(path))


def test_probe_accumulation_nondecreasing_and_additive():
    ens = mv.sample_initial(mv.maxwellian_spec(), 64, mv.RngSeed(5))
    fields = mv.FieldModel(mv.b_none(), mv.e_direct(0.05))
    state = mv.make_state(ens, fields, probe_indices=[0, 1, 2])
    end, _ = mv.advance(state, 0.04, 1e-3)
    for probe in end.probes:
        cum = probe.cum_absE
        assert np.all(np.diff(cum) >= -1e-18)
        from magvlasov.diagnostics import _probe_integral

        whole = _probe_integral(probe, 0.0, 0.04)
        split = _probe_integral(probe, 0.0, 0.015) + _probe_integral(probe, 0.015, 0.04)
        assert whole == pytest.approx(split, abs=1e-15)


def test_advance_guardrail_aborts_with_partial_series():
    ens = mv.sample_initial(mv.maxwellian_spec(), 16, mv.RngSeed(1))
    fields = mv.FieldModel(mv.b_const([0, 0, 50.0]), mv.e_frozen("zero"))
    state = mv.make_state(ens, fields)
    with pytest.raises(SolverAbort) as exc:
        mv.advance(state, 1.0, 0.05)
    assert exc.value.series.truncated
    assert "abort" in exc.value.series.meta


def test_advance_step_budget():
    ens = mv.sample_initial(mv.maxwellian_spec(), 4, mv.RngSeed(1))
    state = mv.make_state(ens, mv.FieldModel(mv.b_none(), mv.e_frozen("zero")))
    tiny = mv.DiagnosticsSettings(max_steps=10)
    with pytest.raises(ValueError, match="budget"):
        mv.advance(state, 1.0, 1e-3, tiny)


def test_torus_advance_wraps_positions():
    ens = mv.sample_initial(mv.maxwellian_spec(0.2, 1.0, 1.0), 256, mv.RngSeed(2), mv.torus(1.0))
    fields = mv.FieldModel(mv.b_none(), mv.e_periodic(16, 1.0))
    state = mv.make_state(ens, fields)
    end, series = mv.advance(state, 0.05, 5e-3, mv.DiagnosticsSettings(cadence=5))
    assert np.all(end.ensemble.positions >= 0.0)
    assert np.all(end.ensemble.positions < 1.0)
    series.validate()


# ---------------------------------------------------------- flow jacobian

def test_flow_jacobian_identity_at_t0():
    assert mv.flow_jacobian(gyro_fields(), [0, 0, 0], [1, 0, 0], 0.0) == 1.0


def test_flow_jacobian_gyro_one_period():
    det = mv.flow_jacobian(gyro_fields(), [0.1, 0.2, 0.0], [1.0, 0.0, 0.1], 2 * pi,
                           dt_fd=1e-4, dt_int=2e-3)
    assert abs(det - 1.0) < 1e-6


def test_flow_jacobian_frozen_sine_field():
    fields = mv.FieldModel(mv.b_none(), mv.e_frozen("sin_x1", amplitude=1.0, wavenumber=1.0))
    det = mv.flow_jacobian(fields, [0.3, 0.0, 0.0], [0.2, -0.1, 0.0], 0.5,
                           dt_fd=1e-4, dt_int=1e-3)
    assert abs(det - 1.0) < 1e-5


def test_flow_jacobian_rejects_self_consistent():
    fields = mv.FieldModel(mv.b_none(), mv.e_direct(0.05))
    with pytest.raises(ValueError):
        mv.flow_jacobian(fields, [0, 0, 0], [1, 0, 0], 1.0)


def test_integrate_analytic_boris_matches_step_boris():
    fields = gyro_fields()
    x, v = integrate_analytic(fields, [[0, 0, 0]], [[1, 0, 0]], 0.0, 0.5, 50, method="boris")
    state = single_particle_state([0, 0, 0], [1, 0, 0], fields)
    for _ in range(50):
        state = mv.step_boris(state, 0.01)
    assert np.allclose(x[0], state.ensemble.positions[0], atol=1e-14)
    assert np.allclose(v[0], state.ensemble.velocities[0], atol=1e-14)


# ------------------------------------------------------------- interfaces

def test_probe_csv_header(tmp_path):
    ens = mv.sample_initial(mv.maxwellian_spec(), 8, mv.RngSeed(0))
    fields = mv.FieldModel(mv.b_none(), mv.e_direct(0.05))
    state = mv.make_state(ens, fields, probe_indices=[0])
    end, _ = mv.advance(state, 0.01, 1e-3)
    path = tmp_path / "probe.csv"
    probe_to_csv(end.probes[0], path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "s,x1,x2,x3,v1,v2,v3,absE,accumAbsE"
    assert len(lines) == 12  # initial sample plus 10 steps, plus header
