"""The log-blowup initial datum and its density L^p profile.

f = 1 on {|x| < 1, |v| <= (ln 1/|x|)^{1/3}} integrates in v to
rho0(x) = (4 pi / 3) ln_-(|x|): an unbounded density whose L^p norms grow
linearly in p.  The sampler reproduces the radial law exactly (inverse
CDF via the secondary Lambert branch); the radial histogram recovers the
profile where the resolution and the sample budget allow, and the
closed-form norm table shows the bounded-ratio behaviour the coupled-flow
machinery monitors.

High-p norms are dominated by radii near e^{-p/3}: for p = 30 that is
~4.5e-5, far below any practical bin width, so measured values there are
resolution-truncated estimates (flagged in the table).
"""

from math import pi

import numpy as np

import magvlasov as mv
from magvlasov.diagnostics import (
    lp_from_radial_histogram,
    miot_resolvable,
    miot_rho_lp_quadrature,
    radial_density_histogram,
)
from magvlasov.ensemble import miot_rho_lp, miot_rho_profile

spec = mv.build_miot_spec()
print(f"total mass        : {spec.total_mass:.6f} = 16 pi^2 / 27")
print(f"sup bound         : {spec.f_inf_bound}")
print(f"rho0 at |x| = 1/e : {miot_rho_profile(np.exp(-1.0)):.6f} = 4 pi / 3")
for k in (3, 6, 9):
    print(f"velocity moment M_{k}(0) = {mv.analytic_initial_moment(spec, k):.6f}")

n = 200_000
ens = mv.sample_initial(spec, n, mv.RngSeed(0))
edges, rho_hat = radial_density_histogram(ens, 1.0 / 64.0)

print(f"\nsampled {n} markers; radial histogram with 64 bins")
print(f"{'p':>4} {'closed form':>12} {'quadrature':>12} {'sampled':>10} "
      f"{'ratio/p':>9} {'res-ok':>7}")
for p in (1.0, 2.0, 4.0, 8.0, 16.0, 30.0):
    closed = miot_rho_lp(p)
    quad = miot_rho_lp_quadrature(p)
    meas = lp_from_radial_histogram(edges, rho_hat, p)
    res = miot_resolvable(p, 1.0 / 64.0)
    print(f"{p:4g} {closed:12.5f} {quad:12.5f} {meas:10.5f} "
          f"{closed / p:9.5f} {str(res):>7}")
print("(res-ok covers resolution truncation only; at this sample budget the"
      "\n innermost bins hold ~10 markers, so p >= 8 stays shot-noise limited)")

print("\nratio ||rho0||_p / p decreases toward 4 pi / (9 e) = "
      f"{4 * pi / (9 * np.e):.5f}: the bounded-growth criterion quantity")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    mids = 0.5 * (edges[1:] + edges[:-1])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(mids, rho_hat, drawstyle="steps-mid", label="radial histogram")
    ax.plot(mids, miot_rho_profile(mids), "--", label="(4 pi / 3) ln(1/r)")
    ax.set_xlabel("r")
    ax.set_ylabel("rho(r)")
    ax.legend()
    fig.savefig("demo07_log_blowup_profile.png", dpi=120, bbox_inches="tight")
    print("wrote demo07_log_blowup_profile.png")
except ImportError:
    pass
