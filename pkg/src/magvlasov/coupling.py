"""Coupled-flow stability lab.

Two numerical branches start from the same initial samples and evolve under
(possibly) different field configurations or an initial velocity kick; the
lab measures the stability functionals a uniqueness analysis manipulates:
the weighted position distance D(t), the quadratic phase coupling Q(t),
labeled field/Lorentz difference accumulators, the saturated-Osgood
comparison envelope, and the second-order comparison constant.

Two genuinely distinct weak solutions of one Cauchy problem are not
numerically realizable, so the branches differ by a controlled
perturbation; identical configurations must reproduce D = Q = 0 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import isfinite

import numpy as np

from .diagnostics import BoundReport, lp_norm, miot_resolvable, miot_rho_lp_quadrature
from .ensemble import (
    InitialDataSpec,
    RngSeed,
    analytic_initial_moment,
    analytic_position_moment,
    sample_initial,
)
from .fields import FieldModel, b_inf, eval_B
from .integrator import SimState, _field_at_particles, _step_boris_core, make_state

__all__ = [
    "BranchConfig",
    "CoupledRun",
    "OsgoodParams",
    "couple_runs",
    "distance_D",
    "distance_Q_loeper",
    "osgood_envelope",
    "osgood_envelope_derivative",
    "double_time_integral",
    "SecondOrderReport",
    "second_order_gronwall_check",
    "miot_criterion_audit",
    "require_loeper_moments",
]


@dataclass(frozen=True)
class BranchConfig:
    """One branch: a field configuration plus an optional velocity kick
    applied at t = 0 (field-free perturbation of the shared samples)."""

    fields: FieldModel
    v_kick: tuple = (0.0, 0.0, 0.0)


@dataclass
class CoupledRun:
    """Synchronized pair of flows from identical initial samples.

    Index i refers to the same initial phase point in both branches; at
    t = 0 the branches coincide except for the configured kicks.  Records
    hold D, Q and the labeled accumulators at the recording cadence.
    """

    times: np.ndarray
    d_values: np.ndarray
    q_values: np.ndarray
    i_acc: np.ndarray  # double time integral of the field-difference term
    j_acc: np.ndarray  # ... of the ||B|| |V1 - V2| term
    k_acc: np.ndarray  # ... of the |V2| |B(X1) - B(X2)| term
    i_rate: np.ndarray  # single time integrals of the same integrands
    j_rate: np.ndarray
    k_rate: np.ndarray
    mass: float
    meta: dict = field(default_factory=dict)
    probes_a: list = field(default_factory=list)
    probes_b: list = field(default_factory=list)

    def _lookup(self, t: float) -> int:
        idx = np.nonzero(np.isclose(self.times, t, rtol=0, atol=1e-9))[0]
        if idx.size == 0:
            raise ValueError(f"t={t} was not recorded")
        return int(idx[0])

    def to_jsonl(self, path) -> None:
        import json

        with open(path, "w") as fh:
            for n, t in enumerate(self.times):
                fh.write(json.dumps({
                    "t": float(t),
                    "D": float(self.d_values[n]),
                    "Q_loeper": float(self.q_values[n]),
                    "I_acc": float(self.i_acc[n]),
                    "J_acc": float(self.j_acc[n]),
                    "K_acc": float(self.k_acc[n]),
                    "eta": self.meta.get("eta"),
                    "p": self.meta.get("p"),
                }) + "\n")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,D,Q_loeper\n")
            for n, t in enumerate(self.times):
                fh.write(f"{float(t)!r},{float(self.d_values[n])!r},{float(self.q_values[n])!r}\n")


def distance_D(coupled: CoupledRun, t: float) -> float:
    """Weighted L^1 position coupling sum_i w_i |X1_i(t) - X2_i(t)|."""
    return float(coupled.d_values[coupled._lookup(t)])


def distance_Q_loeper(coupled: CoupledRun, t: float) -> float:
    """Quadratic phase coupling (1/2) sum_i w_i (|dX_i|^2 + |dV_i|^2)."""
    return float(coupled.q_values[coupled._lookup(t)])


def couple_runs(spec: InitialDataSpec, n: int, seed: RngSeed,
                config_a: BranchConfig, config_b: BranchConfig,
                t_end: float, dt: float, cadence: int = 10,
                probe_indices=None, meta: dict | None = None) -> CoupledRun:
    """Advance both branches in lockstep and record the coupling functionals.

    The branches share one sampled ensemble (same spec, n, seed); each step
    is synchronized so the accumulators integrate along the coupling.
    Deterministic under identical inputs.  The quadratic coupling is always
    recorded, so the initial datum must satisfy the finite |v|^6 / |x|^4
    moment hypotheses (enforced up front).
    """
    require_loeper_moments(spec)
    ens = sample_initial(spec, n, seed)
    sa = make_state(_kicked(ens, config_a.v_kick), config_a.fields, probe_indices)
    sb = make_state(_kicked(ens, config_b.v_kick), config_b.fields, probe_indices)
    w = ens.weights
    mass = ens.total_mass
    n_steps = int(round(t_end / dt)) if t_end > 0 else 0
    if t_end > 0 and abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be an integer number of steps")
    b_ref = config_a.fields.magnetic
    b_sup = max(b_inf(config_a.fields, t_end), b_inf(config_b.fields, t_end))

    times = [0.0]
    d_vals = [_coupling_d(w, sa, sb)]
    q_vals = [_coupling_q(w, sa, sb)]
    i_rate = j_rate = k_rate = 0.0  # single integrals
    i_acc = j_acc = k_acc = 0.0  # double integrals
    recs = {"i_acc": [0.0], "j_acc": [0.0], "k_acc": [0.0],
            "i_rate": [0.0], "j_rate": [0.0], "k_rate": [0.0]}

    ea, _ = _field_at_particles(sa.fields, sa.ensemble, sa.t)
    eb, _ = _field_at_particles(sb.fields, sb.ensemble, sb.t)
    _append_probe(sa, ea)
    _append_probe(sb, eb)
    gi, gj, gk = _integrands(w, sa, sb, ea, eb, b_ref, b_sup)
    for step in range(1, n_steps + 1):
        sa = _step_boris_core(sa, dt, e_pre=ea)
        sb = _step_boris_core(sb, dt, e_pre=eb)
        ea, _ = _field_at_particles(sa.fields, sa.ensemble, sa.t)
        eb, _ = _field_at_particles(sb.fields, sb.ensemble, sb.t)
        _append_probe(sa, ea)
        _append_probe(sb, eb)
        gi2, gj2, gk2 = _integrands(w, sa, sb, ea, eb, b_ref, b_sup)
        # trapezoid for the inner integrals, then for their time integrals
        i_new = i_rate + 0.5 * dt * (gi + gi2)
        j_new = j_rate + 0.5 * dt * (gj + gj2)
        k_new = k_rate + 0.5 * dt * (gk + gk2)
        i_acc += 0.5 * dt * (i_rate + i_new)
        j_acc += 0.5 * dt * (j_rate + j_new)
        k_acc += 0.5 * dt * (k_rate + k_new)
        i_rate, j_rate, k_rate = i_new, j_new, k_new
        gi, gj, gk = gi2, gj2, gk2
        if step % cadence == 0 or step == n_steps:
            times.append(sa.t)
            d_vals.append(_coupling_d(w, sa, sb))
            q_vals.append(_coupling_q(w, sa, sb))
            recs["i_acc"].append(i_acc)
            recs["j_acc"].append(j_acc)
            recs["k_acc"].append(k_acc)
            recs["i_rate"].append(i_rate)
            recs["j_rate"].append(j_rate)
            recs["k_rate"].append(k_rate)
    return CoupledRun(
        np.array(times), np.array(d_vals), np.array(q_vals),
        np.array(recs["i_acc"]), np.array(recs["j_acc"]), np.array(recs["k_acc"]),
        np.array(recs["i_rate"]), np.array(recs["j_rate"]), np.array(recs["k_rate"]),
        mass, dict(meta or {}), sa.probes, sb.probes,
    )


def _kicked(ens, kick):
    kick = np.asarray(kick, dtype=float)
    if np.all(kick == 0.0):
        return ens
    return ens.with_phase(ens.positions.copy(), ens.velocities + kick)


def _append_probe(state: SimState, e) -> None:
    if state.probes:
        mags = np.linalg.norm(e[state.probe_indices], axis=1)
        for probe, idx, mag in zip(state.probes, state.probe_indices, mags):
            probe.append(state.t, state.ensemble.positions[idx],
                         state.ensemble.velocities[idx], mag)


def _coupling_d(w, sa, sb) -> float:
    dx = sa.ensemble.positions - sb.ensemble.positions
    return float(np.sum(w * np.linalg.norm(dx, axis=1)))


def _coupling_q(w, sa, sb) -> float:
    dx = sa.ensemble.positions - sb.ensemble.positions
    dv = sa.ensemble.velocities - sb.ensemble.velocities
    return 0.5 * float(np.sum(w * (np.einsum("ij,ij->i", dx, dx) + np.einsum("ij,ij->i", dv, dv))))


def _integrands(w, sa, sb, ea, eb, b_ref, b_sup):
    de = np.linalg.norm(ea - eb, axis=1)
    dv = np.linalg.norm(sa.ensemble.velocities - sb.ensemble.velocities, axis=1)
    gi = float(np.sum(w * de))
    gj = b_sup * float(np.sum(w * dv))
    b1 = eval_B(b_ref, sa.t, sa.ensemble.positions)
    b2 = eval_B(b_ref, sa.t, sb.ensemble.positions)
    v2 = np.linalg.norm(sb.ensemble.velocities, axis=1)
    gk = float(np.sum(w * v2 * np.linalg.norm(b1 - b2, axis=1)))
    return gi, gj, gk


@dataclass(frozen=True)
class OsgoodParams:
    """Constant and initial value of the saturated comparison ODE
    y' = C y (1 + ln(1/y))."""

    C: float
    y0: float

    def __post_init__(self):
        if self.C <= 0 or self.y0 <= 0:
            raise ValueError("C and y0 must be positive")


def osgood_envelope(params: OsgoodParams, t) -> np.ndarray | float:
    """Closed-form solution y(t) = exp(1 - (1 - ln y0) e^{-C t}).

    y0 = e is the fixed point; y0 -> 0+ sends the whole envelope to zero,
    which is the uniqueness mechanism (zero initial distance stays zero).
    """
    t = np.asarray(t, dtype=float)
    out = np.exp(1.0 - (1.0 - np.log(params.y0)) * np.exp(-params.C * t))
    return float(out) if out.ndim == 0 else out


def osgood_envelope_derivative(params: OsgoodParams, t) -> np.ndarray | float:
    """Exact dy/dt of the envelope (equals C y (1 - ln y) by construction)."""
    t = np.asarray(t, dtype=float)
    z = (1.0 - np.log(params.y0)) * np.exp(-params.C * t)
    out = np.exp(1.0 - z) * params.C * z
    return float(out) if out.ndim == 0 else out


def double_time_integral(values: np.ndarray, dt: float) -> np.ndarray:
    """F(t) = int_0^t int_0^s g(tau) dtau ds by nested cumulative trapezoids."""
    values = np.asarray(values, dtype=float)
    inner = np.concatenate([[0.0], np.cumsum(0.5 * dt * (values[1:] + values[:-1]))])
    return np.concatenate([[0.0], np.cumsum(0.5 * dt * (inner[1:] + inner[:-1]))])


@dataclass(frozen=True)
class SecondOrderReport:
    """Implied constant of F'' <= C p^2 F plus the degenerate-case flag."""

    c_implied: float
    f_is_zero: bool
    params: dict


def second_order_gronwall_check(f_samples: np.ndarray, p: float, dt: float,
                                tol: float = 1e-12) -> SecondOrderReport:
    """Smallest C with F'' <= C p^2 F + tol at all interior nodes.

    F must be sampled on a uniform grid with F(0) = F'(0) = 0 within
    tolerance (for a sampled function with genuinely vanishing initial
    slope the discrete slope at the first node is O(dt), so the gate
    compares against the function's own secular slope scale/T).  F
    identically zero reports C = 0; the comparison principle then forces
    F = 0, which is the uniqueness statement in miniature.
    """
    f = np.asarray(f_samples, dtype=float)
    if f.size < 5:
        raise ValueError("need at least 5 samples")
    if p <= 3:
        raise ValueError("p must exceed 3")
    scale = float(np.max(np.abs(f)))
    if scale == 0.0:
        if abs(f[0]) > tol:
            raise ValueError("F(0) = 0 must hold within tolerance")
        return SecondOrderReport(0.0, True, {"p": p, "dt": dt})
    total_time = dt * (f.size - 1)
    slope0 = abs(f[1] - f[0]) / dt
    if abs(f[0]) > tol * max(1.0, scale) or slope0 > tol / dt + 0.1 * scale / total_time:
        raise ValueError("F(0) = F'(0) = 0 must hold within tolerance")
    fpp = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dt**2
    mid = f[1:-1]
    ok = mid > tol
    c = 0.0
    if ok.any():
        c = float(np.max(np.maximum(fpp[ok] - tol, 0.0) / (p**2 * mid[ok])))
    return SecondOrderReport(c, False, {"p": p, "dt": dt})


def require_loeper_moments(spec: InitialDataSpec) -> None:
    """Gate for the quadratic-coupling audit: the initial datum must carry
    finite sixth velocity and fourth position moments."""
    m6 = analytic_initial_moment(spec, 6.0)
    x4 = analytic_position_moment(spec, 4.0)
    if not (isfinite(m6) and isfinite(x4)):
        raise ValueError(
            "quadratic-coupling audit requires finite |v|^6 and |x|^4 initial moments")


def _cic_noise_inflation(grid, n_samples: int, p: float) -> float:
    """Estimated relative inflation of ||rho||_p from deposit shot noise.

    Poisson counting with the CIC variance-reduction factor (2/3)^3 adds
    w (2/3)^3 mass / h^3 to the L^2 norm square; higher p amplify the
    effect roughly by p - 1.
    """
    w = grid.mass / n_samples
    l2sq = lp_norm(grid, 2.0) ** 2
    if l2sq == 0.0:
        return 0.0
    return (p - 1.0) / 2.0 * (2.0 / 3.0) ** 3 * (w / grid.h**3) * grid.mass / l2sq


def miot_criterion_audit(grids, p_max: float, ceiling: float = 50.0,
                         miot_data: bool = False,
                         n_samples: int | None = None) -> BoundReport:
    """sup_t sup_p ||rho(t)||_p / p finiteness audit over recorded grids.

    Checks the ratio against a configured ceiling for p in {1, 2, 4, ...}
    up to p_max.  For the log-blowup initial datum the t = 0 grid is also
    compared to the quadrature oracle, restricted to exponents the grid can
    actually measure: the resolution rule (norm mass above the bin scale)
    plus, when the sample count is supplied, a shot-noise adequacy guard.
    Reports carry h; unresolved p are recorded as flagged estimates.
    """
    grids = list(grids)
    if not grids:
        raise ValueError("need at least one grid")
    p_list = [1.0]
    while p_list[-1] * 2 <= p_max:
        p_list.append(p_list[-1] * 2)
    ratio = max(lp_norm(g, p) / p for g in grids for p in p_list)
    context = {"p_list": p_list, "h": grids[0].h, "ceiling": ceiling}
    if miot_data:
        comparisons = {}
        for p in p_list:
            oracle = miot_rho_lp_quadrature(p)
            measured = lp_norm(grids[0], p)
            resolved = miot_resolvable(p, grids[0].h)
            if n_samples is not None:
                resolved = resolved and _cic_noise_inflation(grids[0], n_samples, p) <= 0.025
            comparisons[f"p={p:g}"] = {
                "measured": measured,
                "oracle": oracle,
                "resolved": bool(resolved),
            }
            if resolved and abs(measured - oracle) > 0.05 * oracle:
                return BoundReport.from_sides(
                    "miot_criterion", measured, 1.05 * oracle,
                    context={**context, "failed_p": p})
        context["t0_profile"] = comparisons
    return BoundReport.from_sides("miot_criterion", ratio, ceiling, context=context)
