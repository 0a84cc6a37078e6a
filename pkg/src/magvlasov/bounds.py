"""Inequality audits against measured runs.

Every checker returns a BoundReport (failure is a report, not an exception);
implied-constant trackers return the smallest constant making a scaling form
hold, for regression across runs.  Checkers are pure over stored windows and
series; margins reduce in fixed index order.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np

from .diagnostics import BoundReport, DiagnosticsSeries, compute_TB, lp_norm, moment_k
from .ensemble import ParticleEnsemble
from .fields import DensityGrid
from .integrator import ProbeTrajectory, TrajectoryWindow

__all__ = [
    "PartitionSettings",
    "GBUDecomposition",
    "partition_gbu",
    "classify_window",
    "check_velocity_gronwall",
    "check_moment_propagation",
    "check_holder_moments",
    "check_rho_moment_interpolation",
    "rho_interpolation_constant",
    "check_sandwich",
    "check_q_scaling",
    "QScalingReport",
    "kernel_convolution_ratio",
]

A_DEFAULT = 2.0**-10
P_CONSTANT_DEFAULT = 2.0**10

LABEL_G, LABEL_B, LABEL_U = 0, 1, 2


@dataclass(frozen=True)
class PartitionSettings:
    """Slow/near/far split parameters.

    epsilon must lie in (0, (k-2)/(2k)); the default is the midpoint
    (k-2)/(4k).  L is exposed as a scan parameter rather than optimized.
    The speed cut uses P = p_constant * Q * exp(delta * ||B||_inf).
    """

    k: float = 3.0
    epsilon: float | None = None
    L: float = 1.0
    p_constant: float = P_CONSTANT_DEFAULT

    def __post_init__(self):
        if self.k <= 2:
            raise ValueError("k must exceed 2")
        eps0 = (self.k - 2.0) / (2.0 * self.k)
        eps = self.epsilon if self.epsilon is not None else 0.5 * eps0
        if not (0.0 < eps < eps0):
            raise ValueError(f"epsilon must lie in (0, {eps0})")
        object.__setattr__(self, "epsilon", float(eps))
        if self.L <= 0:
            raise ValueError("L must be positive")


@dataclass(frozen=True)
class GBUDecomposition:
    """Field-integral split over the slow (G), near-reference (B) and
    remainder (U) sets; additivity i_g + i_b + i_u = i_total is exact up to
    rounding."""

    i_total: float
    i_g: float
    i_b: float
    i_u: float
    counts: dict
    p_value: float

    @property
    def additivity_error(self) -> float:
        scale = max(abs(self.i_total), 1e-300)
        return abs(self.i_g + self.i_b + self.i_u - self.i_total) / scale


def classify_window(window: TrajectoryWindow, settings: PartitionSettings,
                    q_measured: float, b_inf: float):
    """Per-sample labels over the window: G if min(|v|, |v - V*(s)|) < P,
    else B if |x - X*(s)| <= L (1 + |v|^{2+eps})^{-1} |v - V*(s)|^{-1},
    else U.  Returns (labels, distances-to-reference, P)."""
    p_cut = settings.p_constant * q_measured * np.exp(window.delta * b_inf)
    ref_x = window.ref_positions[:, None, :]
    ref_v = window.ref_velocities[:, None, :]
    dx = window.positions - ref_x
    dist = np.linalg.norm(dx, axis=2)
    speeds = np.linalg.norm(window.velocities, axis=2)
    rel = np.linalg.norm(window.velocities - ref_v, axis=2)
    labels = np.full(speeds.shape, LABEL_U, dtype=np.int8)
    in_g = np.minimum(speeds, rel) < p_cut
    with np.errstate(divide="ignore"):
        lam = settings.L / ((1.0 + speeds ** (2.0 + settings.epsilon)) * np.where(rel > 0, rel, np.inf))
    in_b = ~in_g & (dist <= lam)
    labels[in_g] = LABEL_G
    labels[in_b] = LABEL_B
    return labels, dist, p_cut


def partition_gbu(window: TrajectoryWindow, settings: PartitionSettings,
                  q_measured: float, b_inf: float) -> GBUDecomposition:
    """Time-discretized integrals of f / (|x - X*(s)|^2 + eps_soft^2) split
    over the three sets (trapezoid in s, weighted marker sums in phase
    space); the total is accumulated independently of the split."""
    labels, dist, p_cut = classify_window(window, settings, q_measured, b_inf)
    times = window.times
    tw = np.empty(len(times))
    dt = np.diff(times)
    tw[0] = 0.5 * dt[0]
    tw[-1] = 0.5 * dt[-1]
    tw[1:-1] = 0.5 * (dt[:-1] + dt[1:])
    kern = window.weights[None, :] / (dist**2 + window.eps_soft**2)
    contrib = tw[:, None] * kern
    i_total = float(contrib.sum())
    sums = [float(contrib[labels == lab].sum()) for lab in (LABEL_G, LABEL_B, LABEL_U)]
    counts = {
        "G": int(np.sum(labels == LABEL_G)),
        "B": int(np.sum(labels == LABEL_B)),
        "U": int(np.sum(labels == LABEL_U)),
    }
    return GBUDecomposition(i_total, sums[0], sums[1], sums[2], counts, float(p_cut))


def check_velocity_gronwall(probe: ProbeTrajectory, b_inf: float, n_t: float,
                            t_end: float) -> BoundReport:
    """|V(t)| <= (|v0| + N) exp(t ||B||_inf) at every probe sample.

    N is the larger of the caller's measured N_T and the probe's own
    per-step field-impulse sum: the pusher adds dt |E_k| impulses evaluated
    at step starts, so the trapezoidal field integral can undershoot the
    scheme's own sum by O(dt (|E_0| - |E_t|) / 2) on decaying fields; using
    the discretization-consistent dominator keeps the audit about the
    transport inequality rather than about quadrature order.
    """
    times = probe.times
    if times.size < 1 or times[-1] < t_end - 1e-9:
        raise ValueError("probe does not cover [0, T]")
    if n_t < probe.accumulated_absE * (1 - 1e-12):
        raise ValueError("N_T must dominate the probe's accumulated field integral")
    mask = times <= t_end + 1e-12
    speeds = np.linalg.norm(probe.velocities[mask], axis=1)
    t = times[mask]
    abs_e = probe.abs_e[mask]
    impulse = np.concatenate([[0.0], np.cumsum(abs_e[:-1] * np.diff(t))])
    v0 = speeds[0]
    rhs = (v0 + np.maximum(n_t, impulse)) * np.exp(t * b_inf)
    margin = float(np.min(rhs - speeds))
    worst = int(np.argmin(rhs - speeds))
    return BoundReport.from_sides(
        "velocity_gronwall",
        speeds[worst],
        rhs[worst],
        context={"t": float(t[worst]), "probe": probe.index,
                 "n_t": n_t, "b_inf": b_inf, "estimate": "probe-family N(T)"},
    )


def check_moment_propagation(series: DiagnosticsSeries, k: float, m_k0: float,
                             f_l1: float, b_inf: float) -> BoundReport:
    """Running-sup M_k(t) <= 2^{k-1} e^{k t ||B||} (M_k(0) + N(t)^k ||f||_1)
    at every record, with N(t) the measured running sup of the field
    integral (Q_tt column)."""
    key = f"M{k:g}_sup"
    if series.columns is None or key not in series.columns:
        raise ValueError(f"series does not carry {key}")
    t = series.times()
    lhs = series.column(key)
    n_t = series.column("Q_tt")
    rhs = 2.0 ** (k - 1.0) * np.exp(k * t * b_inf) * (m_k0 + n_t**k * f_l1)
    margins = rhs - lhs
    worst = int(np.argmin(margins))
    return BoundReport.from_sides(
        "moment_propagation",
        lhs[worst],
        rhs[worst],
        context={"t": float(t[worst]), "k": k, "b_inf": b_inf,
                 "estimate": "probe-family N(t)"},
    )


def check_holder_moments(ensemble: ParticleEnsemble, k: float, k0: float) -> BoundReport:
    """Interpolation M_k <= ||f||_1^{(k0-k)/k0} M_{k0}^{k/k0}; equality for
    single-speed data."""
    if not (0 <= k < k0):
        raise ValueError("need 0 <= k < k0")
    mass = ensemble.total_mass
    lhs = moment_k(ensemble, k)
    rhs = mass ** ((k0 - k) / k0) * moment_k(ensemble, k0) ** (k / k0)
    return BoundReport.from_sides("holder_moments", lhs, rhs,
                                  context={"k": k, "k0": k0})


def rho_interpolation_constant(k: float) -> float:
    """Sharp constant of the pointwise split rho <= (4pi/3) f_inf R^3 + R^-k m_k.

    Minimizing over R gives rho <= C_k' a^{k/(k+3)} m_k^{3/(k+3)} with
    a = (4pi/3) f_inf and C_k' = (k/3)^{3/(k+3)} + (3/k)^{k/(k+3)}; taking
    the L^{(k+3)/3} norm then yields
    C_k = C_k' (4pi/3)^{k/(k+3)}.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    e3 = 3.0 / (k + 3.0)
    ek = k / (k + 3.0)
    return ((k / 3.0) ** e3 + (3.0 / k) ** ek) * (4.0 * pi / 3.0) ** ek


def check_rho_moment_interpolation(grid: DensityGrid, ensemble: ParticleEnsemble,
                                   k: float, f_inf: float) -> BoundReport:
    """||rho||_{(k+3)/3} <= C_k f_inf^{k/(k+3)} M_k^{3/(k+3)} on the deposit.

    M_k = 0 (cold data) makes the R-optimization degenerate; the checker
    skips with an explanatory verdict rather than reporting a failure.
    """
    m_k = moment_k(ensemble, k)
    if m_k == 0.0:
        return BoundReport.skipped("rho_moment_interpolation", "degenerate: M_k = 0",
                                   context={"k": k})
    lhs = lp_norm(grid, (k + 3.0) / 3.0)
    rhs = rho_interpolation_constant(k) * f_inf ** (k / (k + 3.0)) * m_k ** (3.0 / (k + 3.0))
    return BoundReport.from_sides("rho_moment_interpolation", lhs, rhs,
                                  context={"k": k, "f_inf": f_inf, "h": grid.h})


def check_sandwich(window: TrajectoryWindow, settings: PartitionSettings,
                   q_measured: float, b_inf: float,
                   a: float = A_DEFAULT) -> BoundReport:
    """Factor-2 two-sided speed control on the remainder set.

    Inside the induction window (delta ||B|| e^{delta ||B||} <= a) every
    marker with at least one U-classified sample must satisfy, at every s,
    2^-1 |v| <= |V(s)| <= 2 |v| and 2^-1 |v-v*| <= |V(s)-V*(s)| <= 2 |v-v*|
    with (v, v*) the endpoint values at the window's final time.
    """
    delta = window.delta
    hyp = delta * b_inf * np.exp(delta * b_inf)
    if hyp > a * (1 + 1e-12):
        return BoundReport.skipped(
            "sandwich", "hypothesis-violated",
            context={"delta_binf": delta * b_inf, "a": a})
    labels, _, p_cut = classify_window(window, settings, q_measured, b_inf)
    u_particles = np.unique(np.nonzero(labels == LABEL_U)[1])
    if u_particles.size == 0:
        return BoundReport.skipped("sandwich", "vacuous: no U samples",
                                   context={"p": p_cut})
    speeds = np.linalg.norm(window.velocities[:, u_particles], axis=2)
    rel = np.linalg.norm(
        window.velocities[:, u_particles] - window.ref_velocities[:, None, :], axis=2)
    v_end = speeds[-1][None, :]
    rel_end = rel[-1][None, :]
    margins = np.stack([
        2.0 * v_end - speeds,
        speeds - 0.5 * v_end,
        2.0 * rel_end - rel,
        rel - 0.5 * rel_end,
    ])
    worst = np.unravel_index(np.argmin(margins), margins.shape)
    margin = float(margins[worst])
    scale = float(max(v_end.max(), rel_end.max(), 1e-300))
    return BoundReport(
        "sandwich",
        lhs=-margin,
        rhs=0.0,
        margin=margin,
        passed=margin >= -1e-12 * scale,
        context={"u_particles": int(u_particles.size), "p": float(p_cut),
                 "delta_binf": delta * b_inf},
    )


@dataclass(frozen=True)
class QScalingReport:
    """Implied constants for the field-integral scaling forms; no pass/fail
    (the analysis constants are not explicit)."""

    c_moment_form: float
    c_window_form: float | None
    window_form_valid: bool
    params: dict


def check_q_scaling(series: DiagnosticsSeries, epsilon: float, b_inf: float,
                    t_end: float) -> QScalingReport:
    """Smallest constants with Q(t,t) <= C (t^{1/2} + t)(1 + M_{2+eps})^{4/7}
    over the series, and Q(t,t) <= C' e^{T||B||(2/5)} (T^{1/2} + T^{7/5});
    the second form applies only inside the induction window T <= T_B."""
    key = f"M{2 + epsilon:g}_sup"
    if series.columns is None or key not in series.columns:
        raise ValueError(f"series does not carry {key}")
    t = series.times()
    q = series.column("Q_tt")
    m = series.column(key)
    pos = t > 0
    denom = (np.sqrt(t[pos]) + t[pos]) * (1.0 + m[pos]) ** (4.0 / 7.0)
    c1 = float(np.max(q[pos] / denom)) if pos.any() else 0.0
    valid = b_inf == 0.0 or t_end <= compute_TB(b_inf, A_DEFAULT) * (1 + 1e-12)
    c2 = None
    if valid:
        denom2 = np.exp(t_end * b_inf) ** 0.4 * (t_end**0.5 + t_end**1.4)
        c2 = float(np.max(q) / denom2)
    return QScalingReport(c1, c2, valid,
                          {"epsilon": epsilon, "b_inf": b_inf, "t_end": t_end,
                           "probe_count": series.meta.get("probe_count")})


def kernel_convolution_ratio(grid: DensityGrid, stride: int = 4) -> float:
    """Scaling ratio ||kappa * |.|^-2||_inf / (||kappa||_{5/3}^{5/9}
    ||kappa||_inf^{4/9}) for a nonnegative density on the grid.

    The convolution sup is probed on a strided subset of cell centers with
    the integrable singularity regularized at half a cell; tracked
    implied-constant style across a family of test densities.
    """
    m = grid.m
    h = grid.h
    centers = [grid.cell_centers_1d(a) for a in range(3)]
    xs = centers[0][::stride]
    ys = centers[1][::stride]
    zs = centers[2][::stride]
    cx, cy, cz = np.meshgrid(centers[0], centers[1], centers[2], indexing="ij")
    best = 0.0
    soft2 = (0.5 * h) ** 2
    vals = grid.values * h**3
    for x in xs:
        for y in ys:
            for z in zs:
                d2 = (cx - x) ** 2 + (cy - y) ** 2 + (cz - z) ** 2 + soft2
                best = max(best, float(np.sum(vals / d2)))
    denom = lp_norm(grid, 5.0 / 3.0) ** (5.0 / 9.0) * lp_norm(grid, np.inf) ** (4.0 / 9.0)
    if denom == 0.0:
        return 0.0
    return best / denom
