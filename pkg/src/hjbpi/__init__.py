"""Monotone finite-difference solvers and policy iteration for optimal control."""

from .benchmarks import BENCHMARK_NAMES, Benchmark, get_benchmark, lq_feedback_policies
from .errors import (
    CFLValidationError,
    ConfigParseError,
    ConfigurationError,
    HJBPIError,
    MonotonicityError,
    NumericalBlowupError,
    TruncatedRolloutError,
    UnsupportedDimensionError,
)
from .grid import (
    Field,
    GradientStencil,
    Grid,
    gradient_central,
    gradient_central_field,
    gradient_one_sided,
    gradient_one_sided_field,
    gradient_stencil,
    laplacian,
    laplacian_field,
)
from .pi import (
    GeometricFit,
    PIConfig,
    PIRun,
    build_initial_policies,
    fit_geometric_rate,
    policy_distance,
    run_policy_iteration,
)
from .problem import (
    ControlProblem,
    ControlSet,
    PolicyField,
    discrete_sup_norms,
    hamiltonian_field,
    hamiltonian_min,
    improve_policy,
    rollout_cost,
    validate_f_bound,
)
from .scheme import (
    CFLReport,
    SchemeParams,
    SpaceTimeSolution,
    apply_step_operator,
    cfl_report,
    evaluate_policy,
    solve_hjb_direct,
    validate_cfl,
)

__version__ = "0.1.0"
