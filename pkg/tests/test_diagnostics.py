"""Moments, energies, norms, the field-integral diagnostic and the
induction-window solver."""

import io
from math import pi

import numpy as np
import pytest
from scipy.special import lambertw

import magvlasov as mv
from magvlasov.diagnostics import (
    BoundReport,
    DiagnosticsSeries,
    lp_from_radial_histogram,
    miot_resolvable,
    miot_rho_lp_quadrature,
    radial_density_histogram,
)
from magvlasov.ensemble import miot_rho_lp


def still_ensemble(points, weights, domain=None):
    pts = np.atleast_2d(np.asarray(points, float))
    return mv.ParticleEnsemble(pts, np.zeros_like(pts), weights,
                               domain or mv.free_space())


# ---------------------------------------------------------------- moments

def test_moment_monokinetic():
    ens = mv.sample_initial(mv.monokinetic_spec(2.0), 1000, mv.RngSeed(0))
    assert mv.moment_k(ens, 2.0) == pytest.approx(4.0, rel=1e-13)
    assert mv.moment_k(ens, 0.0) == pytest.approx(1.0, rel=1e-12)


def test_moment_maxwellian_sampled():
    ens = mv.sample_initial(mv.maxwellian_spec(), 100_000, mv.RngSeed(1))
    assert abs(mv.moment_k(ens, 2.0) - 3.0) < 0.05


def test_moment_rejects_negative_k():
    ens = mv.sample_initial(mv.maxwellian_spec(), 4, mv.RngSeed(0))
    with pytest.raises(ValueError):
        mv.moment_k(ens, -0.5)


# ----------------------------------------------------------------- energy

def test_energy_single_particle():
    ens = mv.ParticleEnsemble([[0.0, 0.0, 0.0]], [[2.0, 0.0, 0.0]], [0.5])
    kin, pot, tot = mv.total_energy(ens, 0.05)
    assert pot == 0.0
    assert kin == pytest.approx(0.5 * 0.5 * 4.0)
    assert tot == kin


def test_energy_pair_green_function_value():
    ens = still_ensemble([[0.0, 0, 0], [1.0, 0, 0]], [1.0, 1.0])
    _, pot, _ = mv.total_energy(ens, 1e-9)
    assert pot == pytest.approx(1.0 / (4 * pi), rel=1e-9)


def test_energy_cold_ensemble():
    ens = still_ensemble([[0.0, 0, 0], [1.0, 0, 0]], [1.0, 1.0])
    kin, _, _ = mv.total_energy(ens, 0.05)
    assert kin == 0.0


def test_energy_torus_requires_mesh():
    pts = np.full((2, 3), 0.25)
    ens = mv.ParticleEnsemble(pts, np.zeros_like(pts), [1.0, 1.0], mv.torus(1.0))
    with pytest.raises(ValueError):
        mv.total_energy(ens, 0.05)


# ---------------------------------------------------------------- lp_norm

def test_lp_norm_p1_is_mass():
    ens = mv.sample_initial(mv.maxwellian_spec(), 4000, mv.RngSeed(2))
    grid = mv.deposit_cic(ens, 24, halfwidth=5.0)
    assert mv.lp_norm(grid, 1.0) == pytest.approx(1.0, rel=1e-10)


def test_lp_norm_uniform_ball_closed_form():
    # ||rho||_p = (mass / vol) vol^{1/p} = (3/(4pi))^{1 - 1/p} for mass 1,
    # R = 1; quadrature oracle confirms the closed form
    p = 5.0 / 3.0
    closed = (3.0 / (4 * pi)) ** (1.0 - 1.0 / p)
    from scipy import integrate

    val, _ = integrate.quad(lambda r: (3 / (4 * pi)) ** p * 4 * pi * r**2, 0, 1)
    assert closed == pytest.approx(val ** (1 / p), rel=1e-12)
    assert closed == pytest.approx(0.5638512613244827, rel=1e-12)
    ens = mv.sample_initial(mv.monokinetic_spec(1.0, 1.0, 1.0), 200_000, mv.RngSeed(3))
    grid = mv.deposit_cic(ens, 32, halfwidth=1.0)
    assert mv.lp_norm(grid, p) == pytest.approx(closed, rel=0.05)


def test_lp_norm_miot_deposit_mass():
    ens = mv.sample_initial(mv.build_miot_spec(), 100_000, mv.RngSeed(4))
    grid = mv.deposit_cic(ens, 64, halfwidth=1.0)
    assert mv.lp_norm(grid, 1.0) == pytest.approx(16 * pi**2 / 27, rel=0.02)


def test_lp_norm_validation_and_inf():
    grid = mv.DensityGrid(np.arange(8.0).reshape(2, 2, 2), 1.0, np.zeros(3))
    with pytest.raises(ValueError):
        mv.lp_norm(grid, 0.5)
    assert mv.lp_norm(grid, np.inf) == 7.0


# --------------------------------------------------------------- compute_Q

def make_probe(times, abs_e):
    probe = mv.ProbeTrajectory(0)
    for t, a in zip(times, abs_e):
        probe.append(t, np.zeros(3), np.zeros(3), a)
    return probe


def test_q_zero_field_run():
    probe = make_probe(np.linspace(0, 1, 11), np.zeros(11))
    assert mv.compute_Q([probe], 1.0, 0.5) == 0.0
    assert mv.compute_Q([probe], 1.0, 1.0) == 0.0


def test_q_constant_field_integral():
    c = 0.37
    probe = make_probe(np.linspace(0, 2, 41), np.full(41, c))
    assert mv.compute_Q([probe], 2.0, 0.5) == pytest.approx(c * 0.5, rel=1e-12)
    assert mv.compute_Q([probe], 2.0, 2.0) == pytest.approx(c * 2.0, rel=1e-12)


def test_q_interval_additivity_exact():
    rng = np.random.default_rng(7)
    probe = make_probe(np.linspace(0, 1, 101), rng.random(101))
    total = mv.compute_Q([probe], 1.0, 1.0)
    left = mv.compute_Q([probe], 0.4, 0.4)
    from magvlasov.diagnostics import _probe_integral

    right = _probe_integral(probe, 0.4, 1.0)
    assert total == pytest.approx(left + right, abs=1e-15)


def test_q_validation():
    probe = make_probe([0.0, 0.5, 1.0], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        mv.compute_Q([probe], 1.0, 0.0)
    with pytest.raises(ValueError):
        mv.compute_Q([probe], 1.0, 1.5)
    with pytest.raises(ValueError):
        mv.compute_Q([], 1.0, 0.5)


def test_q_max_over_probes():
    small = make_probe([0.0, 1.0], [0.1, 0.1])
    big = make_probe([0.0, 1.0], [0.3, 0.3])
    assert mv.compute_Q([small, big], 1.0, 1.0) == pytest.approx(0.3)


# --------------------------------------------------------------- compute_TB

def test_tb_reference_value():
    # bisection result against the Lambert-W oracle and the quoted figure
    got = mv.compute_TB(1.0, 2.0**-10)
    assert got == pytest.approx(float(lambertw(2.0**-10).real), abs=1e-14)
    assert got == pytest.approx(9.75610e-4, abs=1e-8)


def test_tb_exact_inverse_scaling():
    base = mv.compute_TB(1.0, 2.0**-10)
    for b in (0.5, 1.0, 2.0, 4.0):
        assert mv.compute_TB(b, 2.0**-10) == base / b  # exact in fp


def test_tb_monotone_in_a():
    vals = [mv.compute_TB(1.0, a) for a in (1e-3, 1e-6, 1e-9)]
    assert vals[0] > vals[1] > vals[2] > 0.0


@pytest.mark.parametrize("seed", range(5))
def test_tb_functional_inverse_random_pairs(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        b = 10.0 ** rng.uniform(-2, 2)
        a = 10.0 ** rng.uniform(-6, 0)
        t = mv.compute_TB(b, a)
        assert abs(b * t * np.exp(b * t) - a) < 1e-12 * max(1.0, a)


def test_tb_validation():
    with pytest.raises(ValueError):
        mv.compute_TB(0.0, 1e-3)
    with pytest.raises(ValueError):
        mv.compute_TB(1.0, 0.0)


# -------------------------------------------------------------- miot ratio

def test_miot_ratio_uniform_density_max_at_p1():
    m = 8
    c = 2.0
    grid = mv.DensityGrid(np.full((m, m, m), c), 1.0 / m, np.zeros(3), mv.torus(1.0))
    # ratio = c vol^{1/p} / p with vol = 1: maximum c at p = 1
    assert mv.miot_ratio([grid], [1.0, 2.0, 4.0]) == pytest.approx(c)


def test_miot_ratio_zero_density():
    m = 4
    grid = mv.DensityGrid(np.zeros((m, m, m)), 1.0 / m, np.zeros(3))
    assert mv.miot_ratio([grid], [1.0, 2.0]) == 0.0


def test_miot_profile_quadrature_matches_closed_form():
    for p in (1.0, 2.0, 4.0, 8.0, 16.0, 30.0):
        assert miot_rho_lp_quadrature(p) == pytest.approx(miot_rho_lp(p), rel=1e-10)


def test_miot_radial_histogram_resolvable_p():
    ens = mv.sample_initial(mv.build_miot_spec(), 200_000, mv.RngSeed(0))
    edges, rho_hat = radial_density_histogram(ens, 1.0 / 64.0)
    for p in (1.0, 2.0, 4.0):
        assert miot_resolvable(p, 1.0 / 64.0)
        measured = lp_from_radial_histogram(edges, rho_hat, p)
        assert measured == pytest.approx(miot_rho_lp(p), rel=0.05)
    # the norm mass of high p sits at radii far below the bin width
    assert not miot_resolvable(30.0, 1.0 / 64.0)


# ------------------------------------------------------------ bound report

def test_bound_report_pass_rule():
    rep = BoundReport.from_sides("x", 1.0, 1.0)
    assert rep.passed and rep.margin == 0.0
    rep2 = BoundReport.from_sides("x", 1.0 + 1e-15, 1.0)
    assert rep2.passed  # within the 1e-12 |rhs| slack
    rep3 = BoundReport.from_sides("x", 1.1, 1.0)
    assert not rep3.passed
    line = rep3.to_json()
    import json

    rec = json.loads(line)
    assert rec["name"] == "x" and rec["pass"] is False


# ------------------------------------------------------------------ series

def test_series_schema_and_roundtrip(tmp_path):
    s = DiagnosticsSeries()
    s.add_record({"t": 0.0, "M2": 1.0, "M2_sup": 1.0, "kinetic": 1.0,
                  "potential": 0.5, "total": 1.5})
    s.add_record({"t": 0.1, "M2": 0.9, "M2_sup": 1.0, "kinetic": 1.0,
                  "potential": 0.5, "total": 1.5})
    s.validate()
    with pytest.raises(ValueError):
        s.add_record({"t": 0.05, "M2": 1.0, "M2_sup": 1.0, "kinetic": 1.0,
                      "potential": 0.5, "total": 1.5})
    path = tmp_path / "series.json"
    s.to_json(path)
    back = DiagnosticsSeries.from_json(path)
    assert back.records == s.records
    buf = io.StringIO()
    s.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "t,M2,M2_sup,kinetic,potential,total"


def test_series_validate_catches_sup_decrease():
    s = DiagnosticsSeries()
    s.add_record({"t": 0.0, "M2_sup": 2.0, "kinetic": 1.0, "potential": 0.0, "total": 1.0})
    s.add_record({"t": 0.1, "M2_sup": 1.0, "kinetic": 1.0, "potential": 0.0, "total": 1.0})
    with pytest.raises(AssertionError):
        s.validate()


def test_plot_tsv_export(tmp_path):
    s = DiagnosticsSeries()
    s.add_record({"t": 0.0, "M2": 1.0})
    s.add_record({"t": 0.5, "M2": 2.0})
    path = tmp_path / "m2.tsv"
    s.to_plot_tsv("M2", path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t\tM2"
    assert lines[2].split("\t") == ["0.5", "2.0"]
