"""magvlasov: a particle-based magnetized Vlasov-Poisson simulator plus a
diagnostic harness that measures and audits quantitative run properties:
Gronwall velocity bounds, moment propagation, slow/near/far field-integral
partitions, coupled-flow distances, and saturated-Osgood comparisons.
"""

from .ensemble import (
    Domain,
    InitialDataSpec,
    ParticleEnsemble,
    RngSeed,
    build_miot_spec,
    analytic_initial_moment,
    analytic_position_moment,
    free_space,
    maxwellian_spec,
    monokinetic_spec,
    sample_initial,
    torus,
    uniform_ball_spec,
)
from .fields import (
    DensityGrid,
    ElectricSolver,
    FieldModel,
    MagneticModel,
    b_const,
    b_none,
    b_shear,
    b_sinusoid,
    deposit_cic,
    e_direct,
    e_frozen,
    e_infinity_bound,
    e_periodic,
    eval_B,
    eval_E_direct,
    eval_E_periodic,
)
from .diagnostics import (
    BoundReport,
    DiagnosticsSeries,
    compute_Q,
    compute_TB,
    lp_norm,
    miot_ratio,
    moment_k,
    total_energy,
)
from .integrator import (
    DiagnosticsSettings,
    ProbeTrajectory,
    SimState,
    advance,
    flow_jacobian,
    make_state,
    record_window,
    select_probes,
    step_boris,
    step_rk4,
)
from .bounds import (
    GBUDecomposition,
    PartitionSettings,
    check_holder_moments,
    check_moment_propagation,
    check_q_scaling,
    check_rho_moment_interpolation,
    check_sandwich,
    check_velocity_gronwall,
    partition_gbu,
)
from .coupling import (
    BranchConfig,
    CoupledRun,
    OsgoodParams,
    couple_runs,
    distance_D,
    distance_Q_loeper,
    miot_criterion_audit,
    osgood_envelope,
    second_order_gronwall_check,
)

__version__ = "0.1.0"
