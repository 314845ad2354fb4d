"""Constrained bilevel optimization with smoothed projection Jacobians.

The package solves min_x f(x, y*(x)) where y*(x) minimizes a strongly
convex lower objective over a closed convex set, using only projections
onto that set: projection Jacobians are estimated from randomized
smoothing, hypergradients from a truncated resolvent series with a
randomized horizon, and the outer loop is a single-loop momentum method
with normalized steps. ``reference`` holds slow, independent oracles
used to test everything else.
"""

from .bench import (Dataset, HypercleanProblem, LibsvmParseError,
                    QuadraticBilevel, flip_labels, load_libsvm,
                    make_hyperclean, make_quadratic, make_synthetic_binary,
                    save_libsvm)
from .hypergradient import (HypergradConfig, HypergradSample, InteriorityError,
                            NonFiniteError, bias_bound,
                            deterministic_hypergradient, eta_window,
                            exact_hypergradient_interior,
                            exact_smoothed_hypergradient,
                            stochastic_hypergradient)
from .kernels import BACKEND
from .problem import (BilevelProblem, CheckResult, OracleShapeError,
                      ProblemConstants, ValidationReport, validate_problem)
from .projections import (Box, ConstraintSet, HalfSpace, L1Ball, L2Ball,
                          Simplex, Unconstrained,
                          check_variational_inequality, project)
from .reference import (ConvergenceError, InnerSolveReport,
                        brute_force_projection, finite_diff_hypergradient,
                        hypergrad_samples_at_solution, inner_solve,
                        stationarity_measure)
from .rngs import substream
from .smoothing import (JacobianEstimate, SmoothingParams, estimate_jacobian,
                        fd_smoothed_jacobian, mc_mean_jacobian,
                        smoothed_projection)
from .solver import (ConfigError, RunTrace, SolverConfig, SolverState,
                     TraceRecord, config_advisories, config_errors,
                     descent_trend, init_state, run, step)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BilevelProblem", "Box", "CheckResult", "ConfigError",
    "ConstraintSet", "ConvergenceError", "Dataset", "HalfSpace",
    "HypercleanProblem", "HypergradConfig", "HypergradSample",
    "InnerSolveReport", "InteriorityError", "JacobianEstimate", "L1Ball",
    "L2Ball", "LibsvmParseError", "NonFiniteError", "OracleShapeError",
    "ProblemConstants", "QuadraticBilevel", "RunTrace", "Simplex",
    "SmoothingParams", "SolverConfig", "SolverState", "TraceRecord",
    "Unconstrained", "ValidationReport", "bias_bound",
    "brute_force_projection", "check_variational_inequality",
    "config_advisories", "config_errors", "descent_trend",
    "deterministic_hypergradient", "estimate_jacobian", "eta_window",
    "exact_hypergradient_interior", "exact_smoothed_hypergradient",
    "fd_smoothed_jacobian", "finite_diff_hypergradient", "flip_labels",
    "hypergrad_samples_at_solution", "init_state", "inner_solve",
    "load_libsvm", "make_hyperclean", "make_quadratic",
    "make_synthetic_binary", "mc_mean_jacobian", "project", "run",
    "save_libsvm", "smoothed_projection", "stationarity_measure", "step",
    "stochastic_hypergradient", "substream", "validate_problem",
    "__version__",
]
