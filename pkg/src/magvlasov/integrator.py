"""Characteristic advance: Boris pusher (exact magnetic rotation), an RK4
cross-check, probe bookkeeping with running field integrals, the recording
loop, finite-difference flow-map Jacobians, and stored trajectory windows.

Step layout (dt > 0): half-kick by E, exact rotation for v x B via the
tangent construction, half-kick by E, then drift by the updated velocity.
E is solved once per step from the pre-step ensemble.  A negative dt applies
the exact inverse composition (undo drift, then undo kicks/rotation at the
restored position), which makes dt / -dt round trips exact in analytic
fields up to rounding.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import DiagnosticsSeries, compute_Q, lp_norm, moment_k, total_energy
from .ensemble import ParticleEnsemble
from .fields import (
    FieldModel,
    b_inf,
    deposit_cic,
    eval_B,
    eval_E_direct,
    eval_E_frozen,
    eval_E_periodic,
    gather_cic,
)

__all__ = [
    "GuardrailError",
    "SolverAbort",
    "ProbeTrajectory",
    "SimState",
    "DiagnosticsSettings",
    "make_state",
    "select_probes",
    "step_boris",
    "step_rk4",
    "advance",
    "flow_jacobian",
    "integrate_analytic",
    "TrajectoryWindow",
    "record_window",
    "probe_to_csv",
]


class GuardrailError(ValueError):
    """dt * ||B||_inf stability guardrail violation."""


class SolverAbort(RuntimeError):
    """Numerical abort during advance; carries the partial diagnostics."""

    def __init__(self, msg, state=None, series=None):
        super().__init__(msg)
        self.state = state
        self.series = series


class ProbeTrajectory:
    """One tracked characteristic with its running integral of |E|.

    Samples are (s, X(s), V(s), |E(s, X(s))|) appended per step; the
    cumulative trapezoid of |E| is maintained alongside, so integrals over
    subintervals are additive by construction.
    """

    def __init__(self, index: int | None = None):
        self.index = index
        self._t: list[float] = []
        self._x: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self._absE: list[float] = []
        self._cum: list[float] = []

    def append(self, t: float, x, v, abs_e: float) -> None:
        t = float(t)
        abs_e = float(abs_e)
        if self._t and t <= self._t[-1]:
            raise ValueError("probe sample times must be strictly increasing")
        if self._t:
            dt = t - self._t[-1]
            self._cum.append(self._cum[-1] + 0.5 * dt * (self._absE[-1] + abs_e))
        else:
            self._cum.append(0.0)
        self._t.append(t)
        self._x.append(np.array(x, dtype=float))
        self._v.append(np.array(v, dtype=float))
        self._absE.append(abs_e)

    def __len__(self) -> int:
        return len(self._t)

    @property
    def times(self) -> np.ndarray:
        return np.array(self._t)

    @property
    def positions(self) -> np.ndarray:
        return np.array(self._x)

    @property
    def velocities(self) -> np.ndarray:
        return np.array(self._v)

    @property
    def abs_e(self) -> np.ndarray:
        return np.array(self._absE)

    @property
    def cum_absE(self) -> np.ndarray:
        """Running trapezoidal value of int_0^s |E| d tau; nondecreasing."""
        return np.array(self._cum)

    @property
    def accumulated_absE(self) -> float:
        return self._cum[-1] if self._cum else 0.0


def probe_to_csv(probe: ProbeTrajectory, path_or_buf) -> None:
    """CSV export with header s,x1,x2,x3,v1,v2,v3,absE,accumAbsE."""
    own = isinstance(path_or_buf, (str, bytes, os.PathLike))
    buf = open(path_or_buf, "w") if own else path_or_buf
    try:
        buf.write("s,x1,x2,x3,v1,v2,v3,absE,accumAbsE\n")
        for t, x, v, a, c in zip(probe._t, probe._x, probe._v, probe._absE, probe._cum):
            row = [t, float(x[0]), float(x[1]), float(x[2]),
                   float(v[0]), float(v[1]), float(v[2]), a, c]
            buf.write(",".join(repr(col) for col in row) + "\n")
    finally:
        if own:
            buf.close()


@dataclass
class SimState:
    """Current time, marker cloud, probe recorders and field configuration."""

    t: float
    ensemble: ParticleEnsemble
    fields: FieldModel
    probes: list = field(default_factory=list)
    probe_indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))


def make_state(ensemble: ParticleEnsemble, fields: FieldModel,
               probe_indices=None) -> SimState:
    idx = np.array([] if probe_indices is None else probe_indices, dtype=int)
    probes = [ProbeTrajectory(int(i)) for i in idx]
    return SimState(0.0, ensemble, fields, probes, idx)


def select_probes(ensemble: ParticleEnsemble, fields: FieldModel,
                  n_top: int = 64, n_random: int = 64, seed: int = 0) -> np.ndarray:
    """Probe policy: the n_top highest-|E(0, x)| markers plus n_random others.

    The sup defining the field integral is typically dominated by
    trajectories passing near density peaks, which the top-|E| markers track.
    """
    e0, _ = _field_at_particles(fields, ensemble, 0.0)
    mag = np.linalg.norm(e0, axis=1)
    order = np.argsort(-mag, kind="stable")
    top = order[: min(n_top, ensemble.n)]
    rng = np.random.default_rng(np.uint64(seed))
    rest = np.setdiff1d(np.arange(ensemble.n), top)
    n_rand = min(n_random, rest.size)
    rand = rng.choice(rest, size=n_rand, replace=False) if n_rand else np.array([], dtype=int)
    return np.concatenate([top, np.sort(rand)])


def _field_at_particles(fields: FieldModel, ensemble: ParticleEnsemble, t: float):
    """E at every marker plus solver byproducts (mesh grids on the torus)."""
    solver = fields.electric
    if solver.kind == "direct":
        e = eval_E_direct(ensemble, ensemble.positions, solver.params["eps_soft"])
        return e, {}
    if solver.kind == "periodic_fft":
        grid = deposit_cic(ensemble, solver.params["mesh_m"])
        e_grids = eval_E_periodic(grid)
        e = gather_cic(e_grids, ensemble.positions, grid.h, grid.origin, periodic=True)
        return e, {"density_grid": grid, "e_grids": e_grids, "grid_h": grid.h}
    return eval_E_frozen(solver, t, ensemble.positions), {}


def _check_guardrail(fields: FieldModel, dt: float) -> None:
    product = abs(dt) * b_inf(fields, fields.t_max)
    if product >= 1.0:
        raise GuardrailError(
            f"dt * ||B||_inf = {product:.6g} >= 1; reduce dt below the gyro scale"
        )


def _boris_rotate(v: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """Exact rotation of v about b over time dt for the dynamics v' = v x B.

    Tangent construction: t = tan(|B| dt / 2) b_hat, s = 2t / (1 + |t|^2);
    v+ = v + (v + v x t) x s.  Preserves |v| to rounding.
    """
    bmag = np.linalg.norm(b, axis=-1)
    theta = bmag * dt
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(bmag > 0.0, np.tan(0.5 * theta) / np.where(bmag > 0, bmag, 1.0), 0.0)
    tvec = b * scale[..., None]
    t2 = np.einsum("...i,...i->...", tvec, tvec)
    svec = 2.0 * tvec / (1.0 + t2)[..., None]
    v_prime = v + np.cross(v, tvec)
    return v + np.cross(v_prime, svec)


def _wrap_positions(pos: np.ndarray, ensemble: ParticleEnsemble) -> np.ndarray:
    if ensemble.domain.kind != "torus":
        return pos
    box = ensemble.domain.box
    wrapped = np.mod(pos, box)
    wrapped[wrapped >= box] = 0.0  # mod can round up to the box edge
    return wrapped


def _step_boris_core(state: SimState, dt: float, e_pre=None) -> SimState:
    fields = state.fields
    ens = state.ensemble
    if dt > 0:
        e = e_pre if e_pre is not None else _field_at_particles(fields, ens, state.t)[0]
        b = eval_B(fields, min(state.t + 0.5 * dt, fields.horizon), ens.positions)
        v = ens.velocities + 0.5 * dt * e
        v = _boris_rotate(v, b, dt)
        v = v + 0.5 * dt * e
        x = _wrap_positions(ens.positions + dt * v, ens)
    else:
        # inverse composition: undo drift with the current velocity, then
        # undo the kicks and rotation with the field at the restored position
        x = _wrap_positions(ens.positions + dt * ens.velocities, ens)
        restored = ens.with_phase(x, ens.velocities)
        e = _field_at_particles(fields, restored, state.t + dt)[0]
        b = eval_B(fields, min(state.t + 0.5 * dt, fields.horizon), x)
        v = ens.velocities + 0.5 * dt * e
        v = _boris_rotate(v, b, dt)
        v = v + 0.5 * dt * e
    return replace(state, t=state.t + dt, ensemble=ens.with_phase(x, v))


def step_boris(state: SimState, dt: float) -> SimState:
    """One Boris step; probes are not touched (advance owns recording)."""
    if dt == 0:
        raise ValueError("dt must be nonzero")
    _check_guardrail(state.fields, dt)
    return _step_boris_core(state, dt)


def _rhs_analytic(fields: FieldModel, t: float, x: np.ndarray, v: np.ndarray):
    e = eval_E_frozen(fields.electric, t, x)
    b = eval_B(fields, min(t, fields.horizon), x)
    return v, e + np.cross(v, b)


def _step_rk4_core(state: SimState, dt: float) -> SimState:
    fields = state.fields
    ens = state.ensemble
    x0, v0 = ens.positions, ens.velocities
    analytic = fields.electric.kind == "frozen"
    if analytic:
        rhs = lambda tau, x, v: _rhs_analytic(fields, tau, x, v)
    else:
        # E frozen at the step start (single field solve; per-marker vector)
        e0 = _field_at_particles(fields, ens, state.t)[0]
        rhs = lambda tau, x, v: (v, e0 + np.cross(v, eval_B(fields, min(tau, fields.horizon), x)))
    t = state.t
    k1x, k1v = rhs(t, x0, v0)
    k2x, k2v = rhs(t + 0.5 * dt, x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v)
    k3x, k3v = rhs(t + 0.5 * dt, x0 + 0.5 * dt * k2x, v0 + 0.5 * dt * k2v)
    k4x, k4v = rhs(t + dt, x0 + dt * k3x, v0 + dt * k3v)
    x = x0 + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    v = v0 + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return replace(state, t=state.t + dt, ensemble=ens.with_phase(_wrap_positions(x, ens), v))


def step_rk4(state: SimState, dt: float) -> SimState:
    """Classical RK4 cross-check step (same guardrail as the Boris pusher)."""
    if dt == 0:
        raise ValueError("dt must be nonzero")
    _check_guardrail(state.fields, dt)
    return _step_rk4_core(state, dt)


@dataclass(frozen=True)
class DiagnosticsSettings:
    """Recording cadence and the configured k/p/delta lists."""

    cadence: int = 10
    k_list: tuple = (2.0, 3.0)
    p_list: tuple = (5.0 / 3.0, 4.0)
    delta_list: tuple = (0.1,)
    grid_m: int = 32
    grid_halfwidth: float = 4.0
    probe_top: int = 64
    probe_random: int = 64
    max_steps: int = 2_000_000


def _record(series: DiagnosticsSeries, state: SimState, settings: DiagnosticsSettings,
            aux: dict, sups: dict, e0_total: list) -> None:
    ens = state.ensemble
    solver = state.fields.electric
    rec = {"t": state.t}
    for k in settings.k_list:
        mk = moment_k(ens, k)
        key = f"M{k:g}"
        sups[key] = max(sups.get(key, 0.0), mk)
        rec[key] = mk
        rec[key + "_sup"] = sups[key]
    if solver.kind == "periodic_fft":
        kin, pot, tot = total_energy(ens, 0.0, aux["e_grids"], aux["grid_h"])
        grid = aux["density_grid"]
    else:
        if solver.kind == "direct":
            kin, pot, tot = total_energy(ens, solver.params["eps_soft"])
        else:
            kin = moment_k(ens, 2.0) * 0.5
            pot = 0.0  # external frozen field carries no self-energy ledger
            tot = kin
        grid = deposit_cic(ens, settings.grid_m, settings.grid_halfwidth)
    rec["kinetic"], rec["potential"], rec["total"] = kin, pot, tot
    for p in settings.p_list:
        rec[f"rho_L{p:g}"] = lp_norm(grid, p)
    for d in settings.delta_list:
        if state.probes and 0 < d <= state.t:
            rec[f"Q_d{d:g}"] = compute_Q(state.probes, state.t, d)
        else:
            rec[f"Q_d{d:g}"] = float("nan")
    if state.probes and state.t > 0:
        rec["Q_tt"] = compute_Q(state.probes, state.t, state.t)
    else:
        rec["Q_tt"] = 0.0
    if not e0_total:
        e0_total.append(tot)
    base = e0_total[0]
    rec["energy_drift"] = abs(tot - base) / abs(base) if base != 0 else 0.0
    rec["m2_vs_2E0_margin"] = 2.0 * base - moment_k(ens, 2.0)
    series.add_record(rec)


def advance(state: SimState, duration: float, dt: float,
            recorder: DiagnosticsSettings | None = None):
    """Step the system over [t, t + duration], recording diagnostics.

    Every probe receives one sample per step; diagnostics records land every
    ``recorder.cadence`` steps (plus the initial and final instants).  One
    field solve per step; the post-step solve doubles as the next step's
    pre-step field.  On a numerical abort a SolverAbort is raised carrying
    the partial series with its truncation flag set.
    """
    settings = recorder or DiagnosticsSettings()
    series = DiagnosticsSeries()
    series.meta = {"dt": dt, "probe_count": len(state.probes)}
    if duration == 0:
        return state, series
    if duration < 0 or dt <= 0:
        raise ValueError("duration must be >= 0 and dt > 0")
    n_steps = int(round(duration / dt))
    if abs(n_steps * dt - duration) > 1e-9 * max(1.0, duration):
        raise ValueError("duration must be an integer number of steps")
    if n_steps > settings.max_steps:
        raise ValueError(f"step budget exceeded: {n_steps} > {settings.max_steps}")

    sups: dict = {}
    e0_total: list = []
    try:
        e, aux = _field_at_particles(state.fields, state.ensemble, state.t)
        _probe_samples(state, e)
        _record(series, state, settings, aux, sups, e0_total)
        for step in range(1, n_steps + 1):
            _check_guardrail(state.fields, dt)
            state = _step_boris_core(state, dt, e_pre=e)
            e, aux = _field_at_particles(state.fields, state.ensemble, state.t)
            _probe_samples(state, e)
            if step % settings.cadence == 0 or step == n_steps:
                _record(series, state, settings, aux, sups, e0_total)
    except (GuardrailError, FloatingPointError) as err:
        series.truncated = True
        series.meta["abort"] = str(err)
        raise SolverAbort(str(err), state=state, series=series) from err
    return state, series


def _probe_samples(state: SimState, e_at_particles: np.ndarray) -> None:
    if not state.probes:
        return
    mags = np.linalg.norm(e_at_particles[state.probe_indices], axis=1)
    for probe, idx, mag in zip(state.probes, state.probe_indices, mags):
        probe.append(state.t, state.ensemble.positions[idx],
                     state.ensemble.velocities[idx], mag)


def integrate_analytic(fields: FieldModel, x0, v0, t0: float, t1: float,
                       n_steps: int, method: str = "rk4"):
    """Batch-integrate characteristics in a frozen analytic field.

    x0, v0 have shape (n, 3); returns the phase points at t1.  RK4 uses
    exact stage evaluation of E and B.
    """
    if fields.electric.kind != "frozen":
        raise ValueError("analytic integration requires a frozen electric solver")
    x = np.array(x0, dtype=float, ndmin=2)
    v = np.array(v0, dtype=float, ndmin=2)
    dt = (t1 - t0) / n_steps
    t = t0
    if method == "rk4":
        for _ in range(n_steps):
            k1x, k1v = _rhs_analytic(fields, t, x, v)
            k2x, k2v = _rhs_analytic(fields, t + 0.5 * dt, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
            k3x, k3v = _rhs_analytic(fields, t + 0.5 * dt, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
            k4x, k4v = _rhs_analytic(fields, t + dt, x + dt * k3x, v + dt * k3v)
            x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
            t += dt
    elif method == "boris":
        for _ in range(n_steps):
            e = eval_E_frozen(fields.electric, t, x)
            b = eval_B(fields, min(t + 0.5 * dt, fields.horizon), x)
            v = v + 0.5 * dt * e
            v = _boris_rotate(v, b, dt)
            v = v + 0.5 * dt * e
            x = x + dt * v
            t += dt
    else:
        raise ValueError(f"unknown method {method!r}")
    return x, v


def flow_jacobian(fields: FieldModel, x, v, t: float, dt_fd: float = 1e-4,
                  dt_int: float = 1e-3) -> float:
    """Finite-difference determinant of the time-t flow map around (x, v).

    Only analytic (frozen-field) configurations are accepted; the Jacobian
    of the interacting N-body flow is out of scope.  Central differences
    with step dt_fd in each of the six phase coordinates; the 12 perturbed
    characteristics integrate as one RK4 batch.
    """
    if fields.electric.kind != "frozen":
        raise ValueError("flow_jacobian requires an analytic (frozen-field) configuration")
    if dt_fd <= 0:
        raise ValueError("dt_fd must be positive")
    y0 = np.concatenate([np.asarray(x, dtype=float), np.asarray(v, dtype=float)])
    if t == 0:
        return 1.0
    n_steps = max(1, int(round(abs(t) / dt_int)))
    pert = np.repeat(y0[None, :], 12, axis=0)
    for j in range(6):
        pert[2 * j, j] += dt_fd
        pert[2 * j + 1, j] -= dt_fd
    xs, vs = integrate_analytic(fields, pert[:, :3], pert[:, 3:], 0.0, t, n_steps)
    ys = np.hstack([xs, vs])
    jac = np.empty((6, 6))
    for j in range(6):
        jac[:, j] = (ys[2 * j] - ys[2 * j + 1]) / (2.0 * dt_fd)
    return float(np.linalg.det(jac))


@dataclass(frozen=True)
class TrajectoryWindow:
    """Per-step phase snapshots over a closed time window, with a designated
    reference characteristic, as needed by the partition diagnostics."""

    times: np.ndarray
    positions: np.ndarray  # (S, N, 3)
    velocities: np.ndarray  # (S, N, 3)
    weights: np.ndarray
    ref_index: int
    eps_soft: float

    @property
    def ref_positions(self) -> np.ndarray:
        return self.positions[:, self.ref_index]

    @property
    def ref_velocities(self) -> np.ndarray:
        return self.velocities[:, self.ref_index]

    @property
    def delta(self) -> float:
        return float(self.times[-1] - self.times[0])

    def subwindow(self, t0: float, t1: float) -> "TrajectoryWindow":
        """Restriction to [t0, t1]; endpoints must sit on stored samples."""
        tol = 1e-9 * max(1.0, abs(t1))
        mask = (self.times >= t0 - tol) & (self.times <= t1 + tol)
        if not mask.any() or abs(self.times[mask][0] - t0) > tol or abs(
                self.times[mask][-1] - t1) > tol:
            raise ValueError("subwindow endpoints must coincide with stored samples")
        return TrajectoryWindow(self.times[mask], self.positions[mask],
                                self.velocities[mask], self.weights,
                                self.ref_index, self.eps_soft)


def record_window(state: SimState, duration: float, dt: float, ref_index: int,
                  eps_soft: float | None = None):
    """Advance while storing every step's full phase state.

    Returns (end_state, TrajectoryWindow).  The stored trajectories match
    what advance() would produce from the same state (same stepping path).
    """
    n_steps = int(round(duration / dt))
    if n_steps < 1:
        raise ValueError("window must contain at least one step")
    if eps_soft is None:
        eps_soft = state.fields.electric.params.get("eps_soft", 0.05)
    times = [state.t]
    pos = [state.ensemble.positions.copy()]
    vel = [state.ensemble.velocities.copy()]
    for _ in range(n_steps):
        _check_guardrail(state.fields, dt)
        state = _step_boris_core(state, dt)
        times.append(state.t)
        pos.append(state.ensemble.positions.copy())
        vel.append(state.ensemble.velocities.copy())
    window = TrajectoryWindow(np.array(times), np.stack(pos), np.stack(vel),
                              state.ensemble.weights.copy(), int(ref_index),
                              float(eps_soft))
    return state, window
