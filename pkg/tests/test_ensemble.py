"""Samplers, analytic moments and the log-blowup construction."""

from math import gamma, pi

import numpy as np
import pytest
from scipy import integrate

import magvlasov as mv
from magvlasov.ensemble import (
    MIOT_TOTAL_MASS,
    ensemble_to_csv_string,
    miot_rho_lp,
    miot_rho_profile,
)

ALL_SPECS = [
    mv.maxwellian_spec(1.0, 1.0, 1.0),
    mv.uniform_ball_spec(1.0, 1.0, 1.0),
    mv.monokinetic_spec(2.0, 1.0, 1.0),
    mv.build_miot_spec(),
]


def bootstrap_se(values, weights, k, n_boot=200, seed=123):
    """Standard error of the weighted k-th speed moment by bootstrap."""
    rng = np.random.default_rng(seed)
    speeds_k = np.linalg.norm(values, axis=1) ** k
    n = len(speeds_k)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        stats[b] = np.sum(weights[idx] * speeds_k[idx]) * (n / n)
    return float(np.std(stats))


# ---------------------------------------------------------------- sampling

@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
@pytest.mark.parametrize("n", [1, 37, 1000])
def test_mass_exactness(spec, n):
    ens = mv.sample_initial(spec, n, mv.RngSeed(7))
    assert ens.total_mass == pytest.approx(spec.total_mass, rel=1e-12)
    assert np.all(ens.weights == spec.total_mass / n)


def test_monokinetic_speed_is_exact_shell():
    ens = mv.sample_initial(mv.monokinetic_spec(2.0), 1000, mv.RngSeed(1))
    speeds = np.linalg.norm(ens.velocities, axis=1)
    assert np.max(np.abs(speeds - 2.0)) < 1e-13


def test_maxwellian_second_moment_near_three():
    # Gaussian oracle: E|v|^2 = 3 sigma^2, checked by quadrature of the
    # radial density before trusting the sampler
    oracle, _ = integrate.quad(
        lambda r: r**2 * 4 * pi * r**2 * np.exp(-r**2 / 2) / (2 * pi) ** 1.5, 0, np.inf
    )
    assert oracle == pytest.approx(3.0, abs=1e-10)
    ens = mv.sample_initial(mv.maxwellian_spec(1.0, 1.0, 1.0), 100_000, mv.RngSeed(2))
    mean_v2 = np.mean(np.sum(ens.velocities**2, axis=1))
    assert abs(mean_v2 - 3.0) < 0.05


def test_determinism_same_seed_bit_identical():
    spec = mv.maxwellian_spec(1.0, 1.0, 1.0)
    a = mv.sample_initial(spec, 500, mv.RngSeed(42))
    b = mv.sample_initial(spec, 500, mv.RngSeed(42))
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.velocities, b.velocities)
    assert np.array_equal(a.weights, b.weights)
    c = mv.sample_initial(spec, 500, mv.RngSeed(43))
    assert not np.array_equal(a.positions, c.positions)


def test_sampler_rejections():
    spec = mv.maxwellian_spec()
    with pytest.raises(ValueError):
        mv.sample_initial(spec, 0, mv.RngSeed(0))
    with pytest.raises(ValueError):
        mv.sample_initial(mv.build_miot_spec(), 10, mv.RngSeed(0), mv.torus(2.0))


def test_torus_positions_in_box():
    ens = mv.sample_initial(mv.maxwellian_spec(), 2000, mv.RngSeed(3), mv.torus(1.0))
    assert np.all(ens.positions >= 0.0)
    assert np.all(ens.positions < 1.0)


def test_ensemble_invariants_enforced():
    with pytest.raises(ValueError):
        mv.ParticleEnsemble(np.zeros((2, 3)), np.zeros((2, 3)), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        mv.ParticleEnsemble(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))


# ------------------------------------------------------------ miot datum

def test_miot_support_and_conditional_radius():
    ens = mv.sample_initial(mv.build_miot_spec(), 50_000, mv.RngSeed(5))
    r = np.linalg.norm(ens.positions, axis=1)
    s = np.linalg.norm(ens.velocities, axis=1)
    assert np.all(r < 1.0)
    assert np.all(s <= (-np.log(r)) ** (1.0 / 3.0) * (1 + 1e-12))


def test_miot_total_mass_quadrature_oracle():
    # (4pi/3) * 4pi * int_0^1 (-ln r) r^2 dr; the r-integral is 1/9
    val, _ = integrate.quad(lambda r: -np.log(r) * r**2, 0, 1)
    assert val == pytest.approx(1.0 / 9.0, abs=1e-12)
    mass = (4 * pi / 3) * 4 * pi * val
    assert MIOT_TOTAL_MASS == pytest.approx(mass, rel=1e-10)
    assert MIOT_TOTAL_MASS == pytest.approx(5.848654459904805, rel=1e-12)
    assert mv.build_miot_spec().total_mass == MIOT_TOTAL_MASS
    assert mv.build_miot_spec().f_inf_bound == 1.0


def test_miot_density_profile_value():
    # at |x| = 1/e the velocity ball has radius exactly 1: rho = 4pi/3
    assert miot_rho_profile(np.exp(-1.0)) == pytest.approx(4 * pi / 3, rel=1e-12)
    assert miot_rho_profile(1.0) == 0.0
    assert miot_rho_profile(1.7) == 0.0


def test_miot_sampler_agrees_with_rejection_oracle():
    """Inverse-CDF radii must reproduce the rejection-sampled law."""
    rng = np.random.default_rng(99)
    # rejection oracle for the radial density p(r) ~ r^2 (-ln r) on (0,1)
    cap = 0.2  # max of r^2 (-ln r) is ~0.123 at r = e^{-1/3}
    samples = []
    while len(samples) < 20_000:
        r = rng.random(10_000)
        u = rng.random(10_000) * cap
        samples.extend(r[u < r**2 * -np.log(r)])
    oracle = np.array(samples[:20_000])
    ens = mv.sample_initial(mv.build_miot_spec(), 20_000, mv.RngSeed(17))
    ours = np.linalg.norm(ens.positions, axis=1)
    # two-sample moment comparison at 4 combined standard errors
    for k in (1, 2, 3):
        se = np.sqrt(np.var(oracle**k) / len(oracle) + np.var(ours**k) / len(ours))
        assert abs(np.mean(oracle**k) - np.mean(ours**k)) < 4 * se


# ------------------------------------------------------- analytic moments

def test_monokinetic_moment_k3():
    assert mv.analytic_initial_moment(mv.monokinetic_spec(2.0), 3) == pytest.approx(8.0)


def test_zeroth_moment_is_mass():
    for spec in ALL_SPECS:
        assert mv.analytic_initial_moment(spec, 0) == pytest.approx(spec.total_mass, rel=1e-12)


def test_miot_moment_k3_quadrature_oracle():
    # M_3 = (4pi/(3+3)) * 4pi * int_0^1 (-ln r)^2 r^2 dr * ... ; the radial
    # integral is 2/27, giving 16 pi^2 Gamma(3) / (6 * 27)
    val, _ = integrate.quad(lambda r: (-np.log(r)) ** 2 * r**2, 0, 1)
    assert val == pytest.approx(2.0 / 27.0, abs=1e-12)
    expected = 4 * pi / 6.0 * 4 * pi * val
    got = mv.analytic_initial_moment(mv.build_miot_spec(), 3)
    assert got == pytest.approx(expected, rel=1e-9)
    assert got == pytest.approx(1.9495514866349348, rel=1e-12)


@pytest.mark.parametrize("k", [1.0, 2.0, 4.5, 8.0])
def test_miot_moment_general_k_quadrature_oracle(k):
    inner = 4 * pi / (k + 3.0)  # velocity-ball integral of |v|^k at radius 1
    val, _ = integrate.quad(lambda r: (-np.log(r)) ** ((k + 3) / 3.0) * r**2, 0, 1)
    expected = inner * 4 * pi * val
    assert mv.analytic_initial_moment(mv.build_miot_spec(), k) == pytest.approx(
        expected, rel=1e-8
    )


def test_maxwellian_moments_quadrature_oracle():
    spec = mv.maxwellian_spec(1.0, 2.0, 1.5)
    for k in (1, 2, 3, 4):
        val, _ = integrate.quad(
            lambda r: r**k * 4 * pi * r**2 * np.exp(-r**2 / 8) / (2 * pi * 4) ** 1.5,
            0,
            np.inf,
        )
        assert mv.analytic_initial_moment(spec, k) == pytest.approx(1.5 * val, rel=1e-9)


def test_uniform_ball_moments():
    spec = mv.uniform_ball_spec(1.0, 2.0, 1.0)
    # mean of |v|^k over a ball of radius R is 3 R^k / (k+3)
    for k in (1, 2, 5):
        assert mv.analytic_initial_moment(spec, k) == pytest.approx(
            3.0 * 2.0**k / (k + 3.0), rel=1e-12
        )


def test_negative_k_rejected():
    with pytest.raises(ValueError):
        mv.analytic_initial_moment(mv.maxwellian_spec(), -1.0)
    with pytest.raises(ValueError):
        mv.analytic_position_moment(mv.maxwellian_spec(), -2.0)


def test_position_moments():
    val, _ = integrate.quad(lambda r: r**6 * (-np.log(r)), 0, 1)
    expected = (4 * pi / 3) * 4 * pi * val  # miot |x|^4 moment
    assert mv.analytic_position_moment(mv.build_miot_spec(), 4) == pytest.approx(
        expected, rel=1e-10
    )
    assert mv.analytic_position_moment(mv.uniform_ball_spec(2.0, 1.0), 4) == pytest.approx(
        3.0 * 2.0**4 / 7.0, rel=1e-12
    )


# --------------------------------------------------------- property suite

@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind)
@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_monte_carlo_moment_consistency(spec, k):
    """Empirical moments of a 1e5 ensemble match the closed forms within
    3 bootstrap standard errors (exact for k = 0)."""
    ens = mv.sample_initial(spec, 100_000, mv.RngSeed(11))
    measured = mv.moment_k(ens, k)
    expected = mv.analytic_initial_moment(spec, k)
    if k == 0:
        assert measured == pytest.approx(expected, rel=1e-12)
        return
    se = bootstrap_se(ens.velocities, ens.weights, k)
    assert abs(measured - expected) <= max(3 * se, 1e-12 * expected)


def test_miot_moment_growth_ratio_bounded():
    ks = np.arange(3, 31, 3, dtype=float)
    ratios = [mv.analytic_initial_moment(mv.build_miot_spec(), k) ** (3.0 / k) / k for k in ks]
    assert all(r <= 1.5 * ratios[0] for r in ratios)


def test_miot_rho_lp_closed_form_vs_quadrature():
    for p in (1.0, 2.0, 7.0):
        val, _ = integrate.quad(lambda r: (-np.log(r)) ** p * r**2, 0, 1)
        assert val == pytest.approx(gamma(p + 1) / 3 ** (p + 1), rel=1e-10)
        expected = (4 * pi / 3) * (4 * pi * val) ** (1.0 / p)
        assert miot_rho_lp(p) == pytest.approx(expected, rel=1e-10)


# ------------------------------------------------------------- interfaces

def test_csv_export_header_and_shape():
    ens = mv.sample_initial(mv.monokinetic_spec(1.0), 5, mv.RngSeed(0))
    text = ensemble_to_csv_string(ens)
    lines = text.strip().split("\n")
    assert lines[0] == "x1,x2,x3,v1,v2,v3,w"
    assert len(lines) == 6
    row = [float(tok) for tok in lines[1].split(",")]
    assert row[:3] == pytest.approx(list(ens.positions[0]))
    assert row[6] == ens.weights[0]
