"""Shared fixtures: the two standard self-consistent runs reused across
bound-audit and acceptance tests (they dominate suite runtime)."""

from dataclasses import dataclass

import pytest

import magvlasov as mv


@dataclass
class RunBundle:
    spec: object
    state: object
    series: object
    t_end: float
    dt: float
    b_inf: float
    eps_soft: float
    n: int
    seed: int


# epsilon = (k-2)/(4k) at k = 3, so 2 + epsilon is a recorded moment order
EPS_K3 = 1.0 / 12.0


@pytest.fixture(scope="session")
def maxwellian_run() -> RunBundle:
    """Standard magnetized run: maxwellian data, B = (0,0,1), N = 2000,
    T = 1, dt = 1e-3, softening 0.05, 64 + 64 probes."""
    spec = mv.maxwellian_spec(1.0, 1.0, 1.0)
    ens = mv.sample_initial(spec, 2000, mv.RngSeed(0))
    fields = mv.FieldModel(mv.b_const([0.0, 0.0, 1.0]), mv.e_direct(0.05))
    idx = mv.select_probes(ens, fields, 64, 64, 0)
    state = mv.make_state(ens, fields, idx)
    settings = mv.DiagnosticsSettings(
        cadence=20,
        k_list=(2.0, 2.0 + EPS_K3, 3.0),
        p_list=(1.0, 5.0 / 3.0, 4.0),
        delta_list=(0.25,),
    )
    state, series = mv.advance(state, 1.0, 1e-3, settings)
    return RunBundle(spec, state, series, 1.0, 1e-3, 1.0, 0.05, 2000, 0)


@pytest.fixture(scope="session")
def cold_ball_run() -> RunBundle:
    """Cold monokinetic ball, self-consistent free-space run, B = 0."""
    spec = mv.monokinetic_spec(speed=0.0, r_x=1.0, total_mass=1.0)
    ens = mv.sample_initial(spec, 2000, mv.RngSeed(0))
    fields = mv.FieldModel(mv.b_none(), mv.e_direct(0.05))
    idx = mv.select_probes(ens, fields, 64, 64, 0)
    state = mv.make_state(ens, fields, idx)
    settings = mv.DiagnosticsSettings(
        cadence=50, k_list=(2.0, 3.0), p_list=(1.0, 5.0 / 3.0, 4.0), delta_list=(0.5,)
    )
    state, series = mv.advance(state, 1.0, 1e-3, settings)
    return RunBundle(spec, state, series, 1.0, 1e-3, 0.0, 0.05, 2000, 0)
