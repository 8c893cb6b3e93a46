__version__ = "0.1.0"

from convex_bounds.bermudan import (
    BracketRow,
    PutSpec,
    SweepPoint,
    binomial_oracle,
    build_put_mdp,
    convergence_sweep,
    monte_carlo_estimate,
    price_bracket,
    solve_bounds,
)
from convex_bounds.exceptions import (
    AggregateComputationError,
    ComputationError,
    ConfigError,
    ConvexBoundsError,
    InductionStepError,
    InvalidParameterError,
    KnotMismatchError,
    NonFiniteValueError,
    RefinementError,
    SchemeMismatchError,
)
from convex_bounds.mdp_core import (
    BoundKind,
    MdpModel,
    MultiplicativeTransition,
    PolicyTable,
    Scheme,
    ValueTable,
    backward_induction,
    bellman_step,
    extract_policy,
    modified_kernel,
)
from convex_bounds.parallel import run_all
from convex_bounds.pwl import (
    ConvexFunction,
    Grid,
    InterpConvex,
    MaxAffine,
    add,
    evaluate,
    interp_project,
    pointwise_max,
    refine_grid,
    tangent_project,
)
from convex_bounds.sampling import (
    DisturbanceSampling,
    LognormalSpec,
    SamplingKind,
    TruncatedSupport,
    extreme_point_sampling,
    local_average_sampling,
    monte_carlo_antithetic,
    monte_carlo_schedule,
    truncate,
)

__all__ = [
    "AggregateComputationError",
    "BoundKind",
    "BracketRow",
    "ComputationError",
    "ConfigError",
    "ConvexBoundsError",
    "ConvexFunction",
    "DisturbanceSampling",
    "Grid",
    "InductionStepError",
    "InterpConvex",
    "InvalidParameterError",
    "KnotMismatchError",
    "LognormalSpec",
    "MaxAffine",
    "MdpModel",
    "MultiplicativeTransition",
    "NonFiniteValueError",
    "PolicyTable",
    "PutSpec",
    "RefinementError",
    "SamplingKind",
    "SchemeMismatchError",
    "Scheme",
    "SweepPoint",
    "TruncatedSupport",
    "ValueTable",
    "add",
    "backward_induction",
    "bellman_step",
    "binomial_oracle",
    "build_put_mdp",
    "convergence_sweep",
    "evaluate",
    "extract_policy",
    "extreme_point_sampling",
    "interp_project",
    "local_average_sampling",
    "modified_kernel",
    "monte_carlo_antithetic",
    "monte_carlo_estimate",
    "monte_carlo_schedule",
    "pointwise_max",
    "price_bracket",
    "refine_grid",
    "run_all",
    "solve_bounds",
    "tangent_project",
    "truncate",
]
