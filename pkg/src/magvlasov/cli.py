"""Configuration, orchestration and artifact emission.

Subcommands
-----------
run            advance a configured system, write diagnostics + bound audits
couple         drive two perturbed branches and write coupling records
audit          re-check a stored run directory
tb             print the induction-window time for given ||B||_inf and a
miot-profile   emit the log-blowup density L^p profile table

Config files are JSON with the flat section layout documented in
DEFAULT_CONFIG; every run directory receives the exact resolved config.
Exit codes: 0 all enabled checks pass, 1 failed bound check, 2 config
error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import bounds as bnd
from . import coupling as cpl
from .diagnostics import (
    DiagnosticsSeries,
    compute_TB,
    lp_from_radial_histogram,
    lp_norm,
    miot_rho_lp_quadrature,
    miot_resolvable,
    radial_density_histogram,
)
from .ensemble import (
    InitialDataSpec,
    RngSeed,
    build_miot_spec,
    maxwellian_spec,
    miot_rho_lp,
    monokinetic_spec,
    sample_initial,
    torus,
    uniform_ball_spec,
)
from .fields import (
    ElectricSolver,
    FieldModel,
    MagneticModel,
    b_inf,
    deposit_cic,
    e_infinity_bound,
    eval_E_direct,
)
from .integrator import (
    DiagnosticsSettings,
    SolverAbort,
    advance,
    make_state,
    probe_to_csv,
    select_probes,
)

EXIT_OK = 0
EXIT_BOUND_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

#: defaults table (printed by --print-defaults); constants follow the
#: analysis conventions: a = 2^-10 for the induction window, speed-cut
#: prefactor 2^10, Plummer softening 0.05, 64 + 64 probes.
DEFAULTS = {
    "a": 2.0**-10,
    "eps_soft": 0.05,
    "p_constant": 2.0**10,
    "probe_top": 64,
    "probe_random": 64,
    "partition_L": 1.0,
    "cadence": 20,
    "grid_m": 32,
    "grid_halfwidth": 4.0,
    "k_list": [2.0, 3.0],
    "p_list": [5.0 / 3.0, 4.0],
    "delta_list": [0.25],
}

DEFAULT_CONFIG = {
    "initial": {"kind": "maxwellian", "params": {"sigma_x": 1.0, "sigma_v": 1.0},
                "total_mass": 1.0, "f_inf_bound": None},
    "n": 1000,
    "seed": 0,
    "domain": {"kind": "free_space", "box": None},
    "field": {
        "magnetic": {"kind": "uniform_const", "params": {"vector": [0.0, 0.0, 1.0]}},
        "electric": {"kind": "direct", "params": {"eps_soft": DEFAULTS["eps_soft"]}},
    },
    "dt": 1e-3,
    "t_end": 0.5,
    "diagnostics": {
        "cadence": DEFAULTS["cadence"],
        "k_list": DEFAULTS["k_list"],
        "p_list": DEFAULTS["p_list"],
        "delta_list": DEFAULTS["delta_list"],
        "grid_m": DEFAULTS["grid_m"],
        "grid_halfwidth": DEFAULTS["grid_halfwidth"],
        "probe_top": DEFAULTS["probe_top"],
        "probe_random": DEFAULTS["probe_random"],
        "q_scaling_epsilon": None,
    },
    "couple": None,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated run configuration; `raw` round-trips losslessly to JSON."""

    raw: dict
    spec: InitialDataSpec
    n: int
    seed: RngSeed
    fields: FieldModel
    dt: float
    t_end: float
    settings: DiagnosticsSettings
    domain_kind: str
    box: float | None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON ({path} line {err.lineno}): {err.msg}")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        merged = _merge(DEFAULT_CONFIG, raw)
        try:
            spec = _build_spec(merged["initial"])
            n = int(merged["n"])
            if n < 1:
                raise ConfigError("n: must be >= 1")
            seed = RngSeed(int(merged["seed"]))
            dt = float(merged["dt"])
            t_end = float(merged["t_end"])
            if dt <= 0 or t_end <= 0:
                raise ConfigError("dt and t_end: must be positive")
            dom = merged["domain"]
            if dom["kind"] not in ("free_space", "torus"):
                raise ConfigError(f"domain.kind: unknown value {dom['kind']!r}")
            fld = merged["field"]
            magnetic = MagneticModel(fld["magnetic"]["kind"], fld["magnetic"].get("params", {}))
            electric = ElectricSolver(fld["electric"]["kind"], fld["electric"].get("params", {}))
            fields = FieldModel(magnetic, electric, t_max=t_end + dt)
            d = merged["diagnostics"]
            if not (d["k_list"] and d["p_list"] and d["delta_list"]):
                raise ConfigError("diagnostics lists must be nonempty")
            k_list = tuple(float(k) for k in d["k_list"])
            eps_q = d.get("q_scaling_epsilon")
            if eps_q is not None and 2.0 + float(eps_q) not in k_list:
                raise ConfigError(
                    "diagnostics.q_scaling_epsilon: k_list must contain 2 + epsilon")
            settings = DiagnosticsSettings(
                cadence=int(d["cadence"]),
                k_list=k_list,
                p_list=tuple(float(p) for p in d["p_list"]),
                delta_list=tuple(float(x) for x in d["delta_list"]),
                grid_m=int(d["grid_m"]),
                grid_halfwidth=float(d["grid_halfwidth"]),
                probe_top=int(d["probe_top"]),
                probe_random=int(d["probe_random"]),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"config invalid: {err}")
        return cls(merged, spec, n, seed, fields, dt, t_end, settings,
                   dom["kind"], dom.get("box"))


def _merge(base, override):
    if not isinstance(override, dict):
        return override
    out = dict(base)
    for key, val in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _build_spec(block) -> InitialDataSpec:
    kind = block.get("kind")
    params = block.get("params", {}) or {}
    mass = block.get("total_mass", 1.0)
    try:
        if kind == "maxwellian":
            return maxwellian_spec(params.get("sigma_x", 1.0), params.get("sigma_v", 1.0), mass)
        if kind == "uniform_ball":
            return uniform_ball_spec(params.get("r_x", 1.0), params.get("r_v", 1.0), mass)
        if kind == "monokinetic":
            return monokinetic_spec(params.get("speed", 1.0), params.get("r_x", 1.0), mass,
                                    block.get("f_inf_bound") or 1.0)
        if kind == "miot":
            return build_miot_spec()
    except ValueError as err:
        raise ConfigError(f"initial: {err}")
    raise ConfigError(f"initial.kind: unknown value {kind!r}")


def _set_threads(n_threads: int | None) -> None:
    if not n_threads:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n_threads), numba.config.NUMBA_NUM_THREADS)))


def _prepare_state(cfg: RunConfig):
    domain = torus(cfg.box) if cfg.domain_kind == "torus" else None
    ens = sample_initial(cfg.spec, cfg.n, cfg.seed, domain)
    idx = select_probes(ens, cfg.fields, cfg.settings.probe_top,
                        cfg.settings.probe_random, cfg.seed.seed)
    return make_state(ens, cfg.fields, idx)


def _write_run_outputs(out_dir, cfg, series, state, reports, extra_lines=()):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(cfg.raw, fh, indent=2)
        fh.write("\n")
    series.to_csv(os.path.join(out_dir, "series.csv"))
    series.to_json(os.path.join(out_dir, "series.json"))
    with open(os.path.join(out_dir, "reports.jsonl"), "w") as fh:
        for rep in reports:
            fh.write(rep.to_json() + "\n")
        for line in extra_lines:
            fh.write(line + "\n")
    from .ensemble import ensemble_to_csv

    ensemble_to_csv(state.ensemble, os.path.join(out_dir, "ensemble_final.csv"))
    probe_dir = os.path.join(out_dir, "probes")
    os.makedirs(probe_dir, exist_ok=True)
    for k, probe in enumerate(state.probes):
        probe_to_csv(probe, os.path.join(probe_dir, f"probe_{k:04d}.csv"))
    plot_dir = os.path.join(out_dir, "plots")
    os.makedirs(plot_dir, exist_ok=True)
    for col in series.columns or []:
        if col == "t":
            continue
        safe = col.replace("/", "_").replace(" ", "_")
        series.to_plot_tsv(col, os.path.join(plot_dir, f"{safe}.tsv"))


def _run_audits(cfg: RunConfig, state, series) -> list:
    """Standard per-run bound audits; gating reports must all pass."""
    reports = []
    binf = b_inf(cfg.fields, cfg.t_end)
    self_consistent = cfg.fields.electric.kind in ("direct", "periodic_fft")
    n_t = series.last()["Q_tt"]
    for probe in state.probes:
        reports.append(bnd.check_velocity_gronwall(probe, binf, n_t, cfg.t_end))
    m0 = {k: series.records[0][f"M{k:g}"] for k in cfg.settings.k_list}
    for k in cfg.settings.k_list:
        reports.append(bnd.check_moment_propagation(series, k, m0[k],
                                                    state.ensemble.total_mass, binf))
        reports.append(bnd.check_holder_moments(state.ensemble, k, 2 * k))
    if self_consistent:
        drift = series.last()["energy_drift"]
        reports.append(bnd.BoundReport.from_sides("energy_ledger", drift, 0.01,
                                                  context={"t": series.last()["t"]}))
        margin = min(r["m2_vs_2E0_margin"] for r in series.records)
        reports.append(bnd.BoundReport(
            "m2_le_2E0", lhs=-margin, rhs=0.0, margin=margin,
            passed=margin >= -1e-12, context={"t": series.last()["t"]}))
    if cfg.fields.electric.kind == "direct":
        grid = deposit_cic(state.ensemble, cfg.settings.grid_m, cfg.settings.grid_halfwidth)
        reports.append(bnd.check_rho_moment_interpolation(
            grid, state.ensemble, 2.0, cfg.spec.f_inf_bound))
        hw = cfg.settings.grid_halfwidth
        g = np.linspace(-hw, hw, 10)
        targets = np.array([(a, b, c) for a in g for b in g for c in g])
        e = eval_E_direct(state.ensemble, targets, cfg.fields.electric.params["eps_soft"])
        sup_e = float(np.max(np.linalg.norm(e, axis=1)))
        rho_l1 = lp_norm(grid, 1.0)
        reports.append(bnd.BoundReport.from_sides(
            "e_infinity", sup_e,
            e_infinity_bound(rho_l1, lp_norm(grid, 4.0), 4.0),
            context={"t": series.last()["t"], "targets": len(targets), "rho_l1": rho_l1}))
    return reports


def cmd_run(args) -> int:
    cfg = RunConfig.from_file(args.config)
    _set_threads(args.threads)
    state = _prepare_state(cfg)
    try:
        state, series = advance(state, cfg.t_end, cfg.dt, cfg.settings)
    except SolverAbort as err:
        out = args.out or "run_out"
        _write_run_outputs(out, cfg, err.series, err.state, [])
        print(f"numerical abort: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    series.validate()
    reports = _run_audits(cfg, state, series)
    extra = []
    eps_q = cfg.raw["diagnostics"].get("q_scaling_epsilon")
    if eps_q is not None:
        # implied-constant tracker; recorded but never gates the exit status
        qrep = bnd.check_q_scaling(series, float(eps_q), b_inf(cfg.fields, cfg.t_end),
                                   cfg.t_end)
        extra.append(json.dumps({
            "name": "q_scaling_implied",
            "c_moment_form": qrep.c_moment_form,
            "c_window_form": qrep.c_window_form,
            "window_form_valid": qrep.window_form_valid,
            "params": qrep.params,
        }))
    out = args.out or "run_out"
    _write_run_outputs(out, cfg, series, state, reports, extra)
    failed = [r for r in reports if not r.passed]
    for rep in reports:
        tag = "pass" if rep.passed else "FAIL"
        print(f"[{tag}] {rep.name} margin={rep.margin:.6g} ({rep.verdict})")
    print(f"wrote {out}/series.csv with {len(series)} records")
    return EXIT_BOUND_FAIL if failed else EXIT_OK


def cmd_couple(args) -> int:
    cfg = RunConfig.from_file(args.config)
    _set_threads(args.threads)
    blk = cfg.raw.get("couple") or {}
    field_a = cfg.fields
    if "field_b" in blk and blk["field_b"]:
        fb = blk["field_b"]
        field_b = FieldModel(
            MagneticModel(fb["magnetic"]["kind"], fb["magnetic"].get("params", {})),
            ElectricSolver(fb["electric"]["kind"], fb["electric"].get("params", {})),
            t_max=cfg.t_end + cfg.dt,
        )
    else:
        field_b = field_a
    kick = tuple(blk.get("v_kick", (0.0, 0.0, 0.0)))
    run = cpl.couple_runs(
        cfg.spec, cfg.n, cfg.seed,
        cpl.BranchConfig(field_a), cpl.BranchConfig(field_b, kick),
        cfg.t_end, cfg.dt, cadence=cfg.settings.cadence,
        meta={"eta": blk.get("eta"), "p": blk.get("p", 4.0)},
    )
    out = args.out or "couple_out"
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(cfg.raw, fh, indent=2)
        fh.write("\n")
    run.to_jsonl(os.path.join(out, "coupling.jsonl"))
    run.to_csv(os.path.join(out, "coupling.csv"))
    identical = field_b is field_a and all(c == 0.0 for c in kick)
    ok = run.d_values[0] == 0.0
    if identical:
        ok = ok and bool(np.all(run.d_values == 0.0) and np.all(run.q_values == 0.0))
    cs = np.sqrt(2.0 * run.mass * run.q_values)
    ok = ok and bool(np.all(run.d_values <= cs * (1 + 1e-12) + 1e-300))
    print(f"D(0)={float(run.d_values[0])!r} Q(0)={float(run.q_values[0])!r} "
          f"CS-inequality {'pass' if ok else 'FAIL'}")
    print(f"wrote {out}/coupling.jsonl with {len(run.times)} records")
    return EXIT_OK if ok else EXIT_BOUND_FAIL


def cmd_tb(args) -> int:
    val = compute_TB(args.binf, args.a)
    print(f"{val:.5e}")
    return EXIT_OK


def cmd_miot_profile(args) -> int:
    spec = build_miot_spec()
    ens = sample_initial(spec, args.n, RngSeed(args.seed))
    edges, rho_hat = radial_density_histogram(ens, 1.0 / args.bins)
    p_list = [1.0]
    while p_list[-1] * 2 <= args.pmax:
        p_list.append(p_list[-1] * 2)
    if p_list[-1] != args.pmax:
        p_list.append(float(args.pmax))
    lines = ["p\tclosed_form\tquadrature\tsampled\tratio_per_p\tresolved"]
    for p in p_list:
        closed = miot_rho_lp(p)
        quad = miot_rho_lp_quadrature(p)
        meas = lp_from_radial_histogram(edges, rho_hat, p)
        lines.append(
            f"{p:g}\t{closed!r}\t{quad!r}\t{meas!r}\t{closed / p!r}\t"
            f"{miot_resolvable(p, 1.0 / args.bins)}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return EXIT_OK


class _StoredProbe:
    """Probe reloaded from its CSV export (for the audit subcommand)."""

    def __init__(self, path):
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        data = np.atleast_2d(data)
        self.index = None
        self.times = data[:, 0]
        self.velocities = data[:, 4:7]
        self.abs_e = data[:, 7]
        self.cum_absE = data[:, 8]
        self.accumulated_absE = float(self.cum_absE[-1])


def cmd_audit(args) -> int:
    run_dir = args.dir
    cfg_path = os.path.join(run_dir, "config.json")
    series_path = os.path.join(run_dir, "series.json")
    if not (os.path.exists(cfg_path) and os.path.exists(series_path)):
        print(f"not a run directory: {run_dir}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = RunConfig.from_file(cfg_path)
    series = DiagnosticsSeries.from_json(series_path)
    series.validate()
    binf = b_inf(cfg.fields, cfg.t_end)
    reports = []
    for k in cfg.settings.k_list:
        m0 = series.records[0][f"M{k:g}"]
        reports.append(bnd.check_moment_propagation(series, k, m0,
                                                    cfg.spec.total_mass, binf))
    if cfg.fields.electric.kind in ("direct", "periodic_fft"):
        reports.append(bnd.BoundReport.from_sides(
            "energy_ledger", series.last()["energy_drift"], 0.01,
            context={"t": series.last()["t"]}))
    probe_dir = os.path.join(run_dir, "probes")
    if os.path.isdir(probe_dir):
        names = sorted(os.listdir(probe_dir))
        probes = [_StoredProbe(os.path.join(probe_dir, n)) for n in names if n.endswith(".csv")]
        if probes:
            n_t = max(p.accumulated_absE for p in probes)
            for p in probes:
                reports.append(bnd.check_velocity_gronwall(p, binf, n_t, cfg.t_end))
    with open(os.path.join(run_dir, "audit_reports.jsonl"), "w") as fh:
        for rep in reports:
            fh.write(rep.to_json() + "\n")
    failed = [r for r in reports if not r.passed]
    for rep in reports:
        print(f"[{'pass' if rep.passed else 'FAIL'}] {rep.name} margin={rep.margin:.6g}")
    return EXIT_BOUND_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magvlasov", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the defaults table as JSON and exit")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="advance a configured system")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.set_defaults(func=cmd_run)

    p_cpl = sub.add_parser("couple", help="drive two perturbed branches")
    p_cpl.add_argument("--config", required=True)
    p_cpl.add_argument("--out", default=None)
    p_cpl.add_argument("--threads", type=int, default=None)
    p_cpl.set_defaults(func=cmd_couple)

    p_tb = sub.add_parser("tb", help="print the induction-window time")
    p_tb.add_argument("--binf", type=float, required=True)
    p_tb.add_argument("--a", type=float, default=DEFAULTS["a"])
    p_tb.set_defaults(func=cmd_tb)

    p_audit = sub.add_parser("audit", help="re-check a stored run directory")
    p_audit.add_argument("--dir", required=True)
    p_audit.set_defaults(func=cmd_audit)

    p_miot = sub.add_parser("miot-profile", help="log-blowup density L^p table")
    p_miot.add_argument("--n", type=int, default=200_000)
    p_miot.add_argument("--bins", type=int, default=64)
    p_miot.add_argument("--seed", type=int, default=0)
    p_miot.add_argument("--pmax", type=float, default=30.0)
    p_miot.add_argument("--out", default=None)
    p_miot.set_defaults(func=cmd_miot_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(json.dumps(DEFAULTS, indent=2))
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverAbort as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
