"""Local updating of personalized PageRank vectors with Chebyshev polynomials."""

from .chebyshev import (
    ChebyCoefficients,
    MessageLedger,
    cheby_apply,
    chebyshev_iterates,
    compute_coefficients,
    ledger_messages_for_round,
)
from .errors import ConfigError, ConvergenceError, DenseLimitError, NumericalError, SpectralBoundError
from .graph import (
    Graph,
    GraphDelta,
    GraphError,
    apply_delta,
    build_graph,
    indicator,
    relative_error,
    support,
    transition_transpose_apply,
)
from .operators import (
    DiffusionParams,
    OperatorSpec,
    alpha_to_mu,
    make_diffusion_params,
    make_operator,
    mu_to_alpha,
    normalized_apply,
    operator_apply,
    operator_delta_apply,
)
from .solvers import (
    PushSolver,
    PushState,
    UpdateResult,
    compute_residual,
    dense_oracle,
    push_update,
    rwr_update,
    solve_scratch,
    sparse_reference,
    update_local,
    warm_restart_power,
)

__version__ = "0.1.0"
