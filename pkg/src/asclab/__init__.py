"""asclab: pseudo-spectral laboratory for forced, damped, fractionally
dissipative active scalar equations on the periodic torus."""

__version__ = "0.1.0"

from .spectral import (  # noqa: F401
    Grid,
    NormReport,
    SpectralField,
    VectorField,
    apply_damping,
    apply_lambda_power,
    dealias_two_thirds,
    norms,
    transform_backward,
    transform_forward,
)
from .symbols import (  # noqa: F401
    AssumptionReport,
    MGSymbol,
    MultiplierSymbol,
    SQGSymbol,
    TabulatedSymbol,
    audit_assumptions,
    mg_symbol,
    sqg_symbol,
    velocity_from_scalar,
)
from .dynamics import (  # noqa: F401
    ForcingSpec,
    ModelParams,
    SimulationState,
    Stepper,
    exact_linear_solution,
    linear_decay_factor,
    nonlinear_term,
    run,
    step,
)
from .diagnostics import (  # noqa: F401
    BudgetTerms,
    DissipationSeries,
    StatBalance,
    TrajectoryRecord,
    dissipation_rate,
    energy_budget,
    linf_decay_check,
    lp_bound_check,
    stat_balance,
)
from .tangent import (  # noqa: F401
    AbsorbingRadii,
    DimensionInputs,
    TangentBundle,
    absorbing_radii,
    attractor_distance,
    dimension_threshold,
    gateaux_check,
    linearized_rhs,
    propagate_volume,
    trace_estimate,
)
