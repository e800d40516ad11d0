"""Model order reduction and output-error estimation for asymptotically
stable LTI systems with inhomogeneous initial conditions."""

__version__ = "0.1.0"

from .core import (
    LtiSystem,
    ReducedModel,
    SplitRom,
    is_hurwitz,
    project,
    split_system,
)
from .errors import DataError, IcmorError, ReductionError, SolverError, StabilityError
from .estimator import (
    Estimate,
    EstimatorOffline,
    RestrictedGram,
    build_offline,
    estimate,
    exact_squared_error,
    restricted_gram,
)
from .reduction import (
    ReductionReport,
    augmented_bt,
    balanced_truncation,
    hankel_singular_values,
    irka,
    isrk,
    split_reduction,
)
from .simulate import (
    PulseInput,
    TimeMesh,
    Trajectory,
    cumulative_l2_error,
    integrate_lti,
    log_mesh,
    output_error_l2,
)
from .solvers import (
    GramianFactors,
    gramian,
    lyapunov_residual,
    solve_lyapunov_dense,
    solve_lyapunov_lowrank,
    solve_sylvester_sparse_dense,
)

__all__ = [
    "LtiSystem", "ReducedModel", "SplitRom", "is_hurwitz", "project",
    "split_system",
    "IcmorError", "StabilityError", "SolverError", "ReductionError", "DataError",
    "GramianFactors", "gramian", "solve_lyapunov_dense", "solve_lyapunov_lowrank",
    "solve_sylvester_sparse_dense", "lyapunov_residual",
    "ReductionReport", "balanced_truncation", "hankel_singular_values",
    "augmented_bt", "split_reduction", "irka", "isrk",
    "EstimatorOffline", "Estimate", "RestrictedGram", "build_offline",
    "estimate", "exact_squared_error", "restricted_gram",
    "TimeMesh", "Trajectory", "PulseInput", "log_mesh", "integrate_lti",
    "cumulative_l2_error", "output_error_l2",
]
