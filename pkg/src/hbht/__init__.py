"""Heavy-ball accelerated hard thresholding for sparse recovery."""

__version__ = "0.1.0"

from .instances import ProblemInstance, Regime, gaussian_instance, normalize_pair
from .linalg import least_squares_on_support
from .solvers import (Algorithm, IterationTrace, SolverConfig, Status, check_success, preset,
                      run_solver)
from .sparsity import best_term_residual, hard_threshold, top_k_indices
from .theory import (brute_force_ric, eta_constant, geometric_envelope, hbht_bounds, hbht_bounds_2k,
                     hbhtp_bounds, hbhtp_bounds_2k, stability_bound)

__all__ = [
    "__version__",
    "Algorithm",
    "IterationTrace",
    "ProblemInstance",
    "Regime",
    "SolverConfig",
    "Status",
    "best_term_residual",
    "brute_force_ric",
    "check_success",
    "eta_constant",
    "gaussian_instance",
    "geometric_envelope",
    "hard_threshold",
    "hbht_bounds",
    "hbht_bounds_2k",
    "hbhtp_bounds",
    "hbhtp_bounds_2k",
    "least_squares_on_support",
    "normalize_pair",
    "preset",
    "run_solver",
    "stability_bound",
    "top_k_indices",
]
