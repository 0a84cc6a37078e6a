"""Electric-field evaluation and magnetic-field models.

Electric solvers
----------------
direct        softened pairwise Coulomb sum on free space (Plummer kernel,
              smooth forces keep the pusher's order)
periodic_fft  spectral solve of -lap(phi) = rho - <rho> on the torus with
              cloud-in-cell deposition
frozen        closed-form external E(t,x) from a small named family; used by
              probe studies, flow-map checks and contrived windows

Magnetic models are external (no Maxwell self-field): uniform-in-space
waveforms B(t) and a Lipschitz spatially varying family, each carrying
declared sup norms that an audit can cross-check on a probe grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import pi

import numpy as np

from . import _kernels
from .ensemble import Domain, ParticleEnsemble, free_space

__all__ = [
    "MagneticModel",
    "ElectricSolver",
    "FieldModel",
    "DensityGrid",
    "b_none",
    "b_const",
    "b_sinusoid",
    "b_shear",
    "e_direct",
    "e_periodic",
    "e_frozen",
    "eval_B",
    "b_inf",
    "grad_b_inf",
    "audit_declared_norms",
    "eval_E_direct",
    "eval_E_frozen",
    "deposit_cic",
    "eval_E_periodic",
    "gather_cic",
    "field_energy",
    "e_infinity_bound",
    "grid_to_csv",
    "grid_to_raw",
]


@dataclass(frozen=True)
class MagneticModel:
    """External magnetic field: ``none``, ``uniform_const``, ``uniform_sinusoid``
    or the Lipschitz spatial family ``shear`` B(x) = (0, 0, b0 + b1 tanh(k x1)).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("none", "uniform_const", "uniform_sinusoid", "shear"):
            raise ValueError(f"unknown magnetic model kind {self.kind!r}")


def b_none() -> MagneticModel:
    return MagneticModel("none")


def b_const(vector) -> MagneticModel:
    v = [float(c) for c in vector]
    if len(v) != 3:
        raise ValueError("constant field needs a 3-vector")
    return MagneticModel("uniform_const", {"vector": v})


def b_sinusoid(amplitude, frequency) -> MagneticModel:
    """B(t) = amplitude * sin(frequency * t), uniform in space."""
    a = [float(c) for c in amplitude]
    if len(a) != 3:
        raise ValueError("sinusoid amplitude needs a 3-vector")
    return MagneticModel("uniform_sinusoid", {"amplitude": a, "frequency": float(frequency)})


def b_shear(b0=1.0, b1=1.0, k=1.0) -> MagneticModel:
    """Spatial shear family B(t,x) = (0, 0, b0 + b1 tanh(k x1)).

    Declared norms: ||B||_inf = |b0| + |b1| and ||grad B||_inf = |b1 k|
    (sup of sech^2 is 1).
    """
    return MagneticModel("shear", {"b0": float(b0), "b1": float(b1), "k": float(k)})


@dataclass(frozen=True)
class ElectricSolver:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("direct", "periodic_fft", "frozen"):
            raise ValueError(f"unknown electric solver kind {self.kind!r}")


def e_direct(eps_soft=0.05) -> ElectricSolver:
    if eps_soft <= 0:
        raise ValueError("eps_soft must be positive")
    return ElectricSolver("direct", {"eps_soft": float(eps_soft)})


def e_periodic(mesh_m, box) -> ElectricSolver:
    if mesh_m < 2:
        raise ValueError("mesh must have at least 2 cells per axis")
    if box <= 0:
        raise ValueError("box side must be positive")
    return ElectricSolver("periodic_fft", {"mesh_m": int(mesh_m), "box": float(box)})


_FROZEN_FAMILIES = ("zero", "const", "sin_x1")


def e_frozen(family="zero", **params) -> ElectricSolver:
    """Closed-form external field.

    zero            E = 0
    const           E = (ex, ey, ez)
    sin_x1          E = (amplitude * sin(wavenumber * x1), 0, 0)
    """
    if family not in _FROZEN_FAMILIES:
        raise ValueError(f"unknown frozen-field family {family!r}")
    return ElectricSolver("frozen", {"family": family, **{k: float(v) for k, v in params.items()}})


@dataclass(frozen=True)
class FieldModel:
    """Magnetic model + electric solver + time horizon for audits."""

    magnetic: MagneticModel
    electric: ElectricSolver
    t_max: float | None = None

    @property
    def horizon(self) -> float:
        return np.inf if self.t_max is None else float(self.t_max)


def eval_B(model: FieldModel | MagneticModel, t: float, x) -> np.ndarray:
    """Field vector(s) at time t and position(s) x (shape (..., 3)).

    Raises ValueError if t lies outside the model's configured horizon.
    """
    if isinstance(model, FieldModel):
        horizon = model.horizon
        mag = model.magnetic
    else:
        horizon = np.inf
        mag = model
    if t < -1e-12 or t > horizon * (1 + 1e-12) + 1e-12:
        raise ValueError(f"t={t} outside the configured horizon [0, {horizon}]")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if mag.kind == "none":
        return out
    if mag.kind == "uniform_const":
        out[...] = mag.params["vector"]
        return out
    if mag.kind == "uniform_sinusoid":
        amp = np.asarray(mag.params["amplitude"])
        out[...] = amp * np.sin(mag.params["frequency"] * t)
        return out
    # shear
    p = mag.params
    out[..., 2] = p["b0"] + p["b1"] * np.tanh(p["k"] * x[..., 0])
    return out


def b_inf(model: FieldModel | MagneticModel, t_horizon: float | None = None) -> float:
    """Declared sup norm of |B| over [0, T] (exact for every family)."""
    mag = model.magnetic if isinstance(model, FieldModel) else model
    if mag.kind == "none":
        return 0.0
    if mag.kind == "uniform_const":
        return float(np.linalg.norm(mag.params["vector"]))
    if mag.kind == "uniform_sinusoid":
        a = float(np.linalg.norm(mag.params["amplitude"]))
        w = mag.params["frequency"]
        if t_horizon is None or w * t_horizon >= pi / 2.0 or w == 0.0:
            return a
        return a * abs(np.sin(w * t_horizon))
    p = mag.params
    return abs(p["b0"]) + abs(p["b1"])


def grad_b_inf(model: FieldModel | MagneticModel) -> float:
    """Declared sup norm of |grad_x B|; zero for uniform-in-space kinds."""
    mag = model.magnetic if isinstance(model, FieldModel) else model
    if mag.kind == "shear":
        return abs(mag.params["b1"] * mag.params["k"])
    return 0.0


def audit_declared_norms(model: FieldModel | MagneticModel, t_horizon: float,
                         space_halfwidth: float = 5.0) -> dict:
    """Self-consistency audit of the declared norms on a 10^3-point probe grid.

    Samples |B| (and |dB/dx1| by central differences for spatial kinds) on
    10 times x 100 space points and checks the probed sups never exceed the
    declared values.
    """
    mag = model.magnetic if isinstance(model, FieldModel) else model
    times = np.linspace(0.0, t_horizon, 10)
    g1 = np.linspace(-space_halfwidth, space_halfwidth, 5)
    g2 = np.linspace(-space_halfwidth, space_halfwidth, 5)
    g3 = np.linspace(-space_halfwidth, space_halfwidth, 4)
    pts = np.array([(a, b, c) for a in g1 for b in g2 for c in g3])
    sup_b = 0.0
    sup_grad = 0.0
    h = 1e-5
    for t in times:
        bv = eval_B(mag, t, pts)
        sup_b = max(sup_b, float(np.max(np.linalg.norm(bv, axis=1))))
        if mag.kind == "shear":
            for axis in range(3):
                dp = pts.copy()
                dm = pts.copy()
                dp[:, axis] += h
                dm[:, axis] -= h
                d = (eval_B(mag, t, dp) - eval_B(mag, t, dm)) / (2 * h)
                sup_grad = max(sup_grad, float(np.max(np.linalg.norm(d, axis=1))))
    declared_b = b_inf(mag, t_horizon)
    declared_g = grad_b_inf(mag)
    tol = 1e-9 + 1e-6 * max(declared_b, declared_g)
    return {
        "declared_b_inf": declared_b,
        "probed_b_sup": sup_b,
        "b_ok": sup_b <= declared_b + tol,
        "declared_grad_inf": declared_g,
        "probed_grad_sup": sup_grad,
        "grad_ok": sup_grad <= declared_g + tol,
    }


def eval_E_direct(ensemble: ParticleEnsemble, targets, eps_soft: float) -> np.ndarray:
    """Softened free-space Coulomb field of the cloud at the target points.

    E(x) = sum_j w_j (x - x_j) / (4 pi (|x - x_j|^2 + eps_soft^2)^{3/2});
    the self term of a target that coincides with a source vanishes by
    symmetry of the softened kernel at zero distance.
    """
    if ensemble.domain.kind != "free_space":
        raise ValueError("direct summation is defined on free space only")
    if eps_soft <= 0:
        raise ValueError("eps_soft must be positive")
    targets = np.ascontiguousarray(np.atleast_2d(np.asarray(targets, dtype=float)))
    return _kernels.efield_direct(
        targets,
        np.ascontiguousarray(ensemble.positions),
        np.ascontiguousarray(ensemble.weights),
        eps_soft * eps_soft,
    )


def eval_E_frozen(solver: ElectricSolver, t: float, x) -> np.ndarray:
    if solver.kind != "frozen":
        raise ValueError("solver is not a frozen-field configuration")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    fam = solver.params["family"]
    if fam == "zero":
        return out
    if fam == "const":
        out[..., 0] = solver.params.get("ex", 0.0)
        out[..., 1] = solver.params.get("ey", 0.0)
        out[..., 2] = solver.params.get("ez", 0.0)
        return out
    # sin_x1
    amp = solver.params.get("amplitude", 1.0)
    k = solver.params.get("wavenumber", 1.0)
    out[..., 0] = amp * np.sin(k * x[..., 0])
    return out


@dataclass(frozen=True)
class DensityGrid:
    """Cell-averaged mass density on an M^3 lattice (mass per cell volume)."""

    values: np.ndarray
    h: float
    origin: np.ndarray
    domain: Domain = field(default_factory=free_space)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 3 or len(set(vals.shape)) != 1:
            raise ValueError("values must be a cubic 3D array")
        org = np.asarray(self.origin, dtype=float).reshape(3)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", org)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.h**3)

    def cell_centers_1d(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.m) + 0.5) * self.h


def _cic_weights(frac):
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    return [
        ((1 - fx) * (1 - fy) * (1 - fz), (0, 0, 0)),
        (fx * (1 - fy) * (1 - fz), (1, 0, 0)),
        ((1 - fx) * fy * (1 - fz), (0, 1, 0)),
        ((1 - fx) * (1 - fy) * fz, (0, 0, 1)),
        (fx * fy * (1 - fz), (1, 1, 0)),
        (fx * (1 - fy) * fz, (1, 0, 1)),
        ((1 - fx) * fy * fz, (0, 1, 1)),
        (fx * fy * fz, (1, 1, 1)),
    ]


def deposit_cic(ensemble: ParticleEnsemble, mesh_m: int,
                halfwidth: float | None = None) -> DensityGrid:
    """Cloud-in-cell (trilinear) deposition of the cloud onto an M^3 grid.

    Torus ensembles deposit onto [0, box)^3 with periodic wrap.  Free-space
    ensembles use [-halfwidth, halfwidth]^3; markers outside are clamped to
    the boundary cells so the deposit conserves total mass exactly.
    """
    m = int(mesh_m)
    if ensemble.domain.kind == "torus":
        box = ensemble.domain.box
        h = box / m
        origin = np.zeros(3)
        periodic = True
    else:
        if halfwidth is None or halfwidth <= 0:
            raise ValueError("free-space deposition needs a positive halfwidth")
        h = 2.0 * halfwidth / m
        origin = np.full(3, -halfwidth)
        periodic = False
    g = (ensemble.positions - origin) / h - 0.5
    i0 = np.floor(g).astype(np.int64)
    frac = g - i0
    grid = np.zeros((m, m, m))
    for wgt, (dx, dy, dz) in _cic_weights(frac):
        idx = i0 + (dx, dy, dz)
        if periodic:
            idx = np.mod(idx, m)
        else:
            idx = np.clip(idx, 0, m - 1)
        np.add.at(grid, (idx[:, 0], idx[:, 1], idx[:, 2]), ensemble.weights * wgt)
    grid /= h**3
    return DensityGrid(grid, h, origin, ensemble.domain)


def eval_E_periodic(grid: DensityGrid) -> np.ndarray:
    """Spectral field on the torus: solve -lap(phi) = rho - <rho>, E = -grad phi.

    The zero mode of E is zero (neutralizing background).  Returns an array
    of shape (3, M, M, M) on the same mesh.
    """
    if grid.domain.kind != "torus":
        raise ValueError("periodic solve requires a torus-domain grid")
    rho = grid.values - grid.values.mean()
    if not np.all(np.isfinite(rho)):
        raise ValueError("mean-removed density contains non-finite values")
    m = grid.m
    rho_hat = np.fft.fftn(rho)
    k1 = 2.0 * pi * np.fft.fftfreq(m, d=grid.h)
    kx, ky, kz = np.meshgrid(k1, k1, k1, indexing="ij")
    k2 = kx**2 + ky**2 + kz**2
    k2[0, 0, 0] = 1.0  # zero mode handled separately
    phi_hat = rho_hat / k2
    phi_hat[0, 0, 0] = 0.0
    out = np.empty((3, m, m, m))
    for c, kc in enumerate((kx, ky, kz)):
        out[c] = np.fft.ifftn(-1j * kc * phi_hat).real
    return out


def gather_cic(field_values: np.ndarray, positions, h: float, origin,
               periodic: bool) -> np.ndarray:
    """Trilinear gather of grid vector fields (shape (3, M, M, M)) at points."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    m = field_values.shape[1]
    g = (positions - np.asarray(origin)) / h - 0.5
    i0 = np.floor(g).astype(np.int64)
    frac = g - i0
    out = np.zeros((positions.shape[0], 3))
    for wgt, (dx, dy, dz) in _cic_weights(frac):
        idx = i0 + (dx, dy, dz)
        if periodic:
            idx = np.mod(idx, m)
        else:
            idx = np.clip(idx, 0, m - 1)
        for c in range(3):
            out[:, c] += wgt * field_values[c, idx[:, 0], idx[:, 1], idx[:, 2]]
    return out


def field_energy(e_grids: np.ndarray, h: float) -> float:
    """(1/2) integral of |E|^2 over the mesh."""
    return 0.5 * float(np.sum(e_grids**2) * h**3)


def e_infinity_bound(rho_l1: float, rho_lp: float, p: float) -> float:
    """Certified sup bound on |E| from L^1 and L^p norms of the density.

    Splits the Coulomb kernel gradient at |x| = 1:
    ||E||_inf <= rho_l1 / (4 pi) + [(4 pi)^{1-q} / (3 - 2q)]^{1/q} rho_lp
    with q = p / (p - 1); the kernel integral diverges for p <= 3.
    """
    if p <= 3:
        raise ValueError("the near-field kernel integral diverges for p <= 3")
    if rho_l1 < 0 or rho_lp < 0:
        raise ValueError("norms must be nonnegative")
    q = p / (p - 1.0)
    kernel = ((4.0 * pi) ** (1.0 - q) / (3.0 - 2.0 * q)) ** (1.0 / q)
    return rho_l1 / (4.0 * pi) + kernel * rho_lp


def grid_to_csv(grid: DensityGrid, path) -> None:
    """Flat CSV export: one `i,j,k,value` row per cell."""
    with open(path, "w") as fh:
        fh.write("i,j,k,value\n")
        m = grid.m
        vals = grid.values
        for k in range(m):
            for j in range(m):
                for i in range(m):
                    fh.write(f"{i},{j},{k},{float(vals[i, j, k])!r}\n")


def grid_to_raw(grid: DensityGrid, path_prefix) -> None:
    """Binary export: `<prefix>.json` header plus `<prefix>.f64` data block.

    The block is little-endian float64 with index i varying fastest, then j,
    then k.
    """
    header = {
        "m": grid.m,
        "h": grid.h,
        "origin": list(map(float, grid.origin)),
        "domain": grid.domain.kind,
        "box": grid.domain.box,
        "dtype": "float64",
        "byte_order": "little",
        "index_order": "i-fastest",
    }
    with open(f"{path_prefix}.json", "w") as fh:
        json.dump(header, fh, indent=2)
        fh.write("\n")
    grid.values.ravel(order="F").astype("<f8").tofile(f"{path_prefix}.f64")
