"""Phase-space data model, initial-data specifications, and samplers.

The continuum distribution f(t,x,v) is discretized as N equal-weight
markers; every downstream integral against f dx dv becomes a weighted sum
over markers.  The sup-norm ||f||_inf is not observable from a point cloud,
so each spec carries it analytically (`f_inf_bound`).

Initial-data kinds
------------------
maxwellian(sigma_x, sigma_v)    isotropic Gaussian in x and v
uniform_ball(r_x, r_v)          uniform on B(0,r_x) x B(0,r_v)
monokinetic(speed, r_x)         uniform ball in x, delta shell |v| = speed
miot                            f = 1 on {|x| < 1, |v| <= (ln 1/|x|)^{1/3}},
                                whose spatial density is (4 pi / 3) ln_-(|x|)

The three non-Miot kinds are artifact choices (any spec with computable
moments would do); the miot kind is the log-blowup construction whose
L^p-vs-p growth the uniqueness harness monitors.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy.special import lambertw

__all__ = [
    "Domain",
    "RngSeed",
    "InitialDataSpec",
    "ParticleEnsemble",
    "free_space",
    "torus",
    "maxwellian_spec",
    "uniform_ball_spec",
    "monokinetic_spec",
    "build_miot_spec",
    "sample_initial",
    "analytic_initial_moment",
    "analytic_position_moment",
    "miot_rho_profile",
    "miot_rho_lp",
    "MIOT_TOTAL_MASS",
    "ensemble_to_csv",
]

#: total mass of the miot construction, (4pi/3) * 4pi * int_0^1 (-ln r) r^2 dr
MIOT_TOTAL_MASS = 16.0 * pi**2 / 27.0

MASS_RTOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """Spatial domain tag: ``free_space`` or ``torus`` with box side L."""

    kind: str
    box: float | None = None

    def __post_init__(self):
        if self.kind not in ("free_space", "torus"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "torus" and (self.box is None or self.box <= 0):
            raise ValueError("torus domain requires a positive box side")


def free_space() -> Domain:
    return Domain("free_space")


def torus(box: float) -> Domain:
    return Domain("torus", float(box))


@dataclass(frozen=True)
class RngSeed:
    """64-bit sampler seed; identical (spec, n, seed) reproduce bit-exactly."""

    seed: int

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True)
class InitialDataSpec:
    """Closed-form initial datum with analytic mass, sup bound and moments."""

    kind: str
    params: dict = field(default_factory=dict)
    total_mass: float = 1.0
    f_inf_bound: float = 1.0

    def __post_init__(self):
        if self.kind not in ("maxwellian", "uniform_ball", "monokinetic", "miot"):
            raise ValueError(f"unknown initial-data kind {self.kind!r}")
        if self.total_mass <= 0:
            raise ValueError("total_mass must be positive")
        if self.f_inf_bound <= 0:
            raise ValueError("f_inf_bound must be positive")


def maxwellian_spec(sigma_x=1.0, sigma_v=1.0, total_mass=1.0) -> InitialDataSpec:
    """Isotropic Gaussian in both position and velocity."""
    if sigma_x <= 0 or sigma_v <= 0:
        raise ValueError("sigma_x and sigma_v must be positive")
    f_inf = total_mass / ((2.0 * pi) ** 3 * sigma_x**3 * sigma_v**3)
    return InitialDataSpec(
        "maxwellian",
        {"sigma_x": float(sigma_x), "sigma_v": float(sigma_v)},
        float(total_mass),
        f_inf,
    )


def uniform_ball_spec(r_x=1.0, r_v=1.0, total_mass=1.0) -> InitialDataSpec:
    """Uniform density on a position ball times a velocity ball."""
    if r_x <= 0 or r_v <= 0:
        raise ValueError("r_x and r_v must be positive")
    ball = 4.0 * pi / 3.0
    f_inf = total_mass / (ball**2 * r_x**3 * r_v**3)
    return InitialDataSpec(
        "uniform_ball", {"r_x": float(r_x), "r_v": float(r_v)}, float(total_mass), f_inf
    )


def monokinetic_spec(speed, r_x=1.0, total_mass=1.0, f_inf_bound=1.0) -> InitialDataSpec:
    """Uniform position ball with every marker at |v| = speed.

    The continuum datum is a delta shell in speed, so it has no finite
    sup norm; `f_inf_bound` is a caller-supplied surrogate.  speed = 0 is
    allowed (cold ball).
    """
    if speed < 0:
        raise ValueError("speed must be nonnegative")
    if r_x <= 0:
        raise ValueError("r_x must be positive")
    return InitialDataSpec(
        "monokinetic",
        {"speed": float(speed), "r_x": float(r_x)},
        float(total_mass),
        float(f_inf_bound),
    )


def build_miot_spec() -> InitialDataSpec:
    """Indicator datum f(x,v) = 1 on {|x| < 1, |v| <= (ln 1/|x|)^{1/3}}.

    Its velocity integral is exactly rho0(x) = (4 pi / 3) ln_-(|x|) and the
    total mass is 16 pi^2 / 27.  The sup bound is exactly 1.
    """
    return InitialDataSpec("miot", {}, MIOT_TOTAL_MASS, 1.0)


@dataclass(frozen=True)
class ParticleEnsemble:
    """Weighted marker cloud in 6D phase space.

    Immutable after construction; safe to share across threads.
    """

    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    domain: Domain = field(default_factory=free_space)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        vel = np.asarray(self.velocities, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or vel.shape != pos.shape:
            raise ValueError("positions and velocities must both have shape (n, 3)")
        if wts.shape != (pos.shape[0],):
            raise ValueError("weights must have shape (n,)")
        if pos.shape[0] < 1:
            raise ValueError("ensemble needs at least one marker")
        if not np.all(wts > 0):
            raise ValueError("all weights must be strictly positive")
        if self.domain.kind == "torus":
            box = self.domain.box
            if np.any(pos < 0) or np.any(pos >= box):
                raise ValueError("torus positions must lie in [0, box)^3")
        for name, arr in (("positions", pos), ("velocities", vel), ("weights", wts)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def with_phase(self, positions, velocities) -> "ParticleEnsemble":
        """Same weights/domain with replaced phase coordinates."""
        return ParticleEnsemble(positions, velocities, self.weights.copy(), self.domain)


def _unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    u = rng.normal(size=(n, 3))
    return u / np.linalg.norm(u, axis=1)[:, None]


def _uniform_ball(rng: np.random.Generator, n: int, radius) -> np.ndarray:
    # radius may be scalar or per-sample array
    r = np.asarray(radius, dtype=float) * rng.random(n) ** (1.0 / 3.0)
    return r[:, None] * _unit_vectors(rng, n)


def _miot_radii(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    # Radial CDF F(r) = r^3 (1 - 3 ln r).  With u = -3 ln r this reads
    # (1 + u) e^{-u} = q, solved exactly by the secondary Lambert branch:
    # u = -1 - W_{-1}(-q / e).
    q = rng.random(n)
    q = np.clip(q, 1e-300, 1.0 - 1e-16)
    u = -1.0 - lambertw(-q / np.e, k=-1).real
    u = np.maximum(u, 0.0)
    r = np.exp(-u / 3.0)
    return r, u


def sample_initial(spec: InitialDataSpec, n: int, seed: RngSeed,
                   domain: Domain | None = None) -> ParticleEnsemble:
    """Draw n equal-weight markers from the spec's density.

    Deterministic: identical (spec, n, seed) triples reproduce the ensemble
    bit-exactly.  Sampling is single-threaded (one sequential RNG stream).

    Raises
    ------
    ValueError
        if n < 1, or for the miot kind on a torus domain (the construction
        lives on the unit ball of free space).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    domain = domain or free_space()
    if spec.kind == "miot" and domain.kind == "torus":
        raise ValueError("miot initial data is defined on free space only")
    rng = np.random.default_rng(np.uint64(seed.seed))

    if spec.kind == "maxwellian":
        sx, sv = spec.params["sigma_x"], spec.params["sigma_v"]
        pos = sx * rng.normal(size=(n, 3))
        vel = sv * rng.normal(size=(n, 3))
    elif spec.kind == "uniform_ball":
        pos = _uniform_ball(rng, n, spec.params["r_x"])
        vel = _uniform_ball(rng, n, spec.params["r_v"])
    elif spec.kind == "monokinetic":
        pos = _uniform_ball(rng, n, spec.params["r_x"])
        vel = spec.params["speed"] * _unit_vectors(rng, n)
    else:  # miot
        r, u = _miot_radii(rng, n)
        pos = r[:, None] * _unit_vectors(rng, n)
        vmax = (u / 3.0) ** (1.0 / 3.0)  # (ln 1/r)^{1/3}
        vel = _uniform_ball(rng, n, vmax)

    if domain.kind == "torus":
        pos = np.mod(pos, domain.box)
    weights = np.full(n, spec.total_mass / n)
    return ParticleEnsemble(pos, vel, weights, domain)


def _gaussian_speed_moment(k: float) -> float:
    # E|Z|^k for Z ~ N(0, I_3): 2^{k/2} Gamma((k+3)/2) / Gamma(3/2)
    return 2.0 ** (k / 2.0) * gamma((k + 3.0) / 2.0) / gamma(1.5)


def analytic_initial_moment(spec: InitialDataSpec, k: float) -> float:
    """Closed-form velocity moment M_k(0) = integral of |v|^k f(0) dx dv."""
    if k < 0:
        raise ValueError("moment order k must be nonnegative")
    m = spec.total_mass
    if spec.kind == "maxwellian":
        return m * spec.params["sigma_v"] ** k * _gaussian_speed_moment(k)
    if spec.kind == "uniform_ball":
        return m * 3.0 / (k + 3.0) * spec.params["r_v"] ** k
    if spec.kind == "monokinetic":
        return m * spec.params["speed"] ** k
    # miot: 16 pi^2 Gamma(k/3 + 2) / ((k + 3) 3^{k/3 + 2})
    return 16.0 * pi**2 * gamma(k / 3.0 + 2.0) / ((k + 3.0) * 3.0 ** (k / 3.0 + 2.0))


def analytic_position_moment(spec: InitialDataSpec, k: float) -> float:
    """Closed-form position moment, integral of |x|^k f(0) dx dv."""
    if k < 0:
        raise ValueError("moment order k must be nonnegative")
    m = spec.total_mass
    if spec.kind == "maxwellian":
        return m * spec.params["sigma_x"] ** k * _gaussian_speed_moment(k)
    if spec.kind in ("uniform_ball", "monokinetic"):
        return m * 3.0 / (k + 3.0) * spec.params["r_x"] ** k
    # miot: (16 pi^2 / 3) int_0^1 r^{k+2} (-ln r) dr = (16 pi^2 / 3) / (k+3)^2
    return 16.0 * pi**2 / 3.0 / (k + 3.0) ** 2


def miot_rho_profile(r) -> np.ndarray:
    """Spatial density rho0(r) = (4 pi / 3) ln_-(r) of the miot datum."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = (r > 0) & (r < 1)
    out[inside] = (4.0 * pi / 3.0) * (-np.log(r[inside]))
    return out


def miot_rho_lp(p: float) -> float:
    """Closed form ||rho0||_p = (4 pi / 3) (4 pi Gamma(p+1) / 3^{p+1})^{1/p}."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return (4.0 * pi / 3.0) * (4.0 * pi * gamma(p + 1.0) / 3.0 ** (p + 1.0)) ** (1.0 / p)


def ensemble_to_csv(ensemble: ParticleEnsemble, path_or_buf) -> None:
    """Write the marker cloud as CSV with header x1,x2,x3,v1,v2,v3,w."""
    own = isinstance(path_or_buf, (str, bytes, os.PathLike))
    buf = open(path_or_buf, "w") if own else path_or_buf
    try:
        buf.write("x1,x2,x3,v1,v2,v3,w\n")
        for x, v, w in zip(ensemble.positions, ensemble.velocities, ensemble.weights):
            row = [float(x[0]), float(x[1]), float(x[2]),
                   float(v[0]), float(v[1]), float(v[2]), float(w)]
            buf.write(",".join(repr(c) for c in row) + "\n")
    finally:
        if own:
            buf.close()


def ensemble_to_csv_string(ensemble: ParticleEnsemble) -> str:
    buf = io.StringIO()
    ensemble_to_csv(ensemble, buf)
    return buf.getvalue()
