"""Run functionals: velocity moments, energy ledger, density L^p norms,
field-integral Q(t, delta), the induction-window time T_B, and the
log-blowup profile machinery.

All functions here are pure over immutable snapshots and safe to call
concurrently across records.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from math import pi

import numpy as np
from scipy import integrate
from scipy.special import gammainc

from . import _kernels
from .ensemble import ParticleEnsemble
from .fields import DensityGrid, field_energy

__all__ = [
    "moment_k",
    "total_energy",
    "lp_norm",
    "compute_Q",
    "compute_TB",
    "miot_ratio",
    "miot_rho_lp_quadrature",
    "radial_density_histogram",
    "lp_from_radial_histogram",
    "miot_resolvable",
    "BoundReport",
    "DiagnosticsSeries",
]

PASS_SLACK = 1e-12


def moment_k(ensemble: ParticleEnsemble, k: float) -> float:
    """Instantaneous velocity moment sum_i w_i |v_i|^k."""
    if k < 0:
        raise ValueError("moment order k must be nonnegative")
    speeds = np.linalg.norm(ensemble.velocities, axis=1)
    if k == 0:
        return float(np.sum(ensemble.weights))
    return float(np.sum(ensemble.weights * speeds**k))


def total_energy(ensemble: ParticleEnsemble, eps_soft: float,
                 e_grids: np.ndarray | None = None,
                 grid_h: float | None = None) -> tuple[float, float, float]:
    """Energy ledger (kinetic, potential, total).

    Free space: potential = (1/2) sum_{i != j} w_i w_j /
    (4 pi (|x_i - x_j|^2 + eps_soft^2)^{1/2}).  On the torus the potential
    term is the mesh field energy (1/2) int |E|^2, supplied via ``e_grids``
    and ``grid_h`` from the periodic solve.
    """
    kinetic = 0.5 * float(
        np.sum(ensemble.weights * np.einsum("ij,ij->i", ensemble.velocities, ensemble.velocities))
    )
    if ensemble.domain.kind == "torus":
        if e_grids is None or grid_h is None:
            raise ValueError("torus potential energy needs the mesh field (e_grids, grid_h)")
        potential = field_energy(e_grids, grid_h)
    else:
        potential = float(
            _kernels.potential_energy_direct(
                np.ascontiguousarray(ensemble.positions),
                np.ascontiguousarray(ensemble.weights),
                eps_soft * eps_soft,
            )
        )
    return kinetic, potential, kinetic + potential


def lp_norm(grid: DensityGrid, p: float) -> float:
    """(sum_cells |value|^p h^3)^{1/p}; max cell value for p = inf."""
    if p == np.inf:
        return float(np.max(grid.values))
    if p < 1:
        raise ValueError("p must be >= 1 (or inf)")
    return float((np.sum(np.abs(grid.values) ** p) * grid.h**3) ** (1.0 / p))


def _probe_integral(probe, a: float, b: float) -> float:
    """Trapezoidal integral of |E| along one probe over [a, b].

    Computed as a difference of the probe's cumulative integral with linear
    interpolation at the endpoints, so the value is additive over adjoining
    intervals by construction.
    """
    times = np.asarray(probe.times)
    cum = np.asarray(probe.cum_absE)
    if times.size < 2:
        raise ValueError("probe has no recorded interval")
    eps = 1e-9 * max(1.0, abs(b))
    if a < times[0] - eps or b > times[-1] + eps:
        raise ValueError(f"probe does not cover [{a}, {b}]")
    ca, cb = np.interp([a, b], times, cum)
    return float(cb - ca)


def compute_Q(probes, t: float, delta: float) -> float:
    """Largest field integral int_{t-delta}^{t} |E(s, X(s))| ds over the probes.

    The continuum quantity takes a sup over every initial point; a finite
    probe family yields a lower estimate, so callers should report the probe
    count along with the value.
    """
    if delta <= 0 or delta > t * (1 + 1e-12):
        raise ValueError("delta must lie in (0, t]")
    if not probes:
        raise ValueError("need at least one probe")
    return max(_probe_integral(p, t - delta, t) for p in probes)


def compute_TB(b_inf: float, a: float = 2.0**-10) -> float:
    """The unique T with b_inf * T * exp(b_inf * T) = a.

    Bisects in u = b_inf * T (root of u e^u = a, bracketed by [0, a]) and
    returns u / b_inf, so the exact 1/b_inf scaling survives floating point.
    Equals W(a) / b_inf with W the principal Lambert branch.
    """
    if b_inf <= 0 or a <= 0:
        raise ValueError("b_inf and a must be positive")
    lo, hi = 0.0, float(a)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * np.exp(mid) < a:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17 + 1e-16 * hi:
            break
    return 0.5 * (lo + hi) / b_inf


def miot_ratio(grids, p_list) -> float:
    """max over recorded grids and exponents of ||rho||_p / p."""
    grids = list(grids)
    p_list = list(p_list)
    if not grids or not p_list:
        raise ValueError("need at least one grid and one exponent")
    return max(lp_norm(g, p) / p for g in grids for p in p_list)


def miot_rho_lp_quadrature(p: float) -> float:
    """Numerical-quadrature value of ||rho0||_p for the log-blowup profile.

    Independent of the Gamma closed form: integrates u^p e^{-3u} on the
    half line (u = ln 1/r) with adaptive quadrature.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    # split at the integrand's peak u = p/3 to help the adaptive rule
    peak = max(p / 3.0, 1.0)
    val = 0.0
    for a, b in ((0.0, peak), (peak, np.inf)):
        part, _ = integrate.quad(lambda u: u**p * np.exp(-3.0 * u), a, b, limit=200)
        val += part
    return (4.0 * pi / 3.0) * (4.0 * pi * val) ** (1.0 / p)


def radial_density_histogram(ensemble: ParticleEnsemble, bin_width: float,
                             r_max: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Spherically averaged density estimate from equal-width radial bins.

    Returns (edges, rho_hat) where rho_hat[j] is the binned mass divided by
    the shell volume.  Intended for radially symmetric data.
    """
    if bin_width <= 0 or r_max <= 0:
        raise ValueError("bin_width and r_max must be positive")
    r = np.linalg.norm(ensemble.positions, axis=1)
    nbins = int(round(r_max / bin_width))
    edges = np.linspace(0.0, nbins * bin_width, nbins + 1)
    mass, _ = np.histogram(r, bins=edges, weights=ensemble.weights)
    vol = 4.0 * pi / 3.0 * (edges[1:] ** 3 - edges[:-1] ** 3)
    return edges, mass / vol


def lp_from_radial_histogram(edges: np.ndarray, rho_hat: np.ndarray, p: float) -> float:
    """L^p norm of a piecewise-constant radial profile."""
    if p < 1:
        raise ValueError("p must be >= 1")
    vol = 4.0 * pi / 3.0 * (edges[1:] ** 3 - edges[:-1] ** 3)
    return float(np.sum(rho_hat**p * vol) ** (1.0 / p))


def miot_resolvable(p: float, h: float, min_fraction: float = 0.99) -> bool:
    """Whether a resolution-h estimate can capture ||rho0||_p.

    The norm mass sits at u = ln(1/r) near p/3; a grid resolves u up to
    about ln(1/h) + ln 2.  The captured fraction of the norm is
    gammainc(p+1, 3 u_max)^{1/p}; below ``min_fraction`` the measured value
    is resolution-truncated no matter how many samples were used.
    """
    u_max = np.log(2.0 / h)
    return float(gammainc(p + 1.0, 3.0 * u_max) ** (1.0 / p)) >= min_fraction


@dataclass
class BoundReport:
    """Outcome of one inequality audit: pass iff margin >= -1e-12 |rhs|."""

    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool
    verdict: str = "checked"
    context: dict = field(default_factory=dict)

    @classmethod
    def from_sides(cls, name, lhs, rhs, context=None, verdict="checked"):
        margin = rhs - lhs
        passed = margin >= -PASS_SLACK * abs(rhs)
        return cls(name, float(lhs), float(rhs), float(margin), bool(passed),
                   verdict, dict(context or {}))

    @classmethod
    def skipped(cls, name, verdict, context=None):
        """A gated or vacuous check; carries no pass/fail force."""
        return cls(name, float("nan"), float("nan"), float("nan"), True,
                   verdict, dict(context or {}))

    def to_json(self) -> str:
        rec = {
            "name": self.name,
            "t": self.context.get("t"),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
            "params": {k: v for k, v in self.context.items() if k != "t"},
        }
        if self.verdict != "checked":
            rec["verdict"] = self.verdict
        return json.dumps(rec, allow_nan=True)


class DiagnosticsSeries:
    """Time-ordered record list with CSV/JSON/plot exports.

    Each record is a flat dict sharing the column set of the first record;
    column order is frozen at first insertion so exports are reproducible.
    """

    def __init__(self):
        self.records: list[dict] = []
        self.columns: list[str] | None = None
        self.truncated = False
        self.meta: dict = {}

    def add_record(self, rec: dict) -> None:
        if self.columns is None:
            self.columns = list(rec.keys())
            if self.columns[0] != "t":
                raise ValueError("first record column must be t")
        elif list(rec.keys()) != self.columns:
            raise ValueError("record columns do not match the series schema")
        if self.records and rec["t"] <= self.records[-1]["t"]:
            raise ValueError("record times must be strictly increasing")
        self.records.append(dict(rec))

    def __len__(self) -> int:
        return len(self.records)

    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.records])

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records])

    def last(self) -> dict:
        return self.records[-1]

    def validate(self) -> None:
        """Internal-consistency checks: sup-moment monotonicity and the
        kinetic + potential = total identity at every record."""
        for key in self.columns or []:
            if key.endswith("_sup"):
                col = self.column(key)
                if np.any(np.diff(col) < -1e-14 * np.maximum(1.0, np.abs(col[1:]))):
                    raise AssertionError(f"running sup column {key} decreased")
        if self.columns and "total" in self.columns:
            kin = self.column("kinetic")
            pot = self.column("potential")
            tot = self.column("total")
            if not np.allclose(kin + pot, tot, rtol=0, atol=1e-12 * (1 + np.abs(tot)).max()):
                raise AssertionError("total energy != kinetic + potential")

    def to_csv(self, path_or_buf) -> None:
        own = isinstance(path_or_buf, (str, bytes, os.PathLike))
        buf = open(path_or_buf, "w") if own else path_or_buf
        try:
            buf.write(",".join(self.columns or []) + "\n")
            for rec in self.records:
                buf.write(",".join(_fmt(rec[c]) for c in self.columns) + "\n")
        finally:
            if own:
                buf.close()

    def to_json(self, path) -> None:
        payload = {
            "columns": self.columns,
            "truncated": self.truncated,
            "meta": self.meta,
            "records": self.records,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, allow_nan=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "DiagnosticsSeries":
        with open(path) as fh:
            payload = json.load(fh)
        series = cls()
        series.columns = payload["columns"]
        series.truncated = payload["truncated"]
        series.meta = payload.get("meta", {})
        series.records = payload["records"]
        return series

    def to_plot_tsv(self, key: str, path) -> None:
        """Two-column `t<TAB>value` file for one diagnostic."""
        with open(path, "w") as fh:
            fh.write(f"t\t{key}\n")
            for rec in self.records:
                fh.write(f"{_fmt(rec['t'])}\t{_fmt(rec[key])}\n")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)
