"""Derivative-free minimization with a hybrid trust-region / direct-search solver.

Typical use::

    from hybrid_dfo import get_problem, hybrid_solve, HybridConfig
    res = hybrid_solve(get_problem("rosenbrock_5"), HybridConfig(max_evals=3000))
    res.x_best, res.f_best, res.stop_reason
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .objective import (
    EvaluationLedger,
    ObjectiveProblem,
    benchmark_suite,
    evaluate,
    get_problem,
    problem_names,
)
from .interp_model import (
    InterpolationSet,
    PolynomialBasis,
    QuadraticModel,
    fit_min_frobenius,
    repair_poisedness,
)
from .trust_region import TrustRegionConfig, solve_subproblem
from .direct_search import DsConfig, ds_phase
from .hybrid import HybridConfig, SolveResult, basic_ds_solve, basic_tr_solve, hybrid_solve
from .multiobjective import ParetoArchive, hypervolume, mo_driver, weight_grid
from .benchmarking import data_profile, performance_profile

__all__ = [
    "EvaluationLedger", "ObjectiveProblem", "benchmark_suite", "evaluate", "get_problem",
    "problem_names", "InterpolationSet", "PolynomialBasis", "QuadraticModel",
    "fit_min_frobenius", "repair_poisedness", "TrustRegionConfig", "solve_subproblem",
    "DsConfig", "ds_phase", "HybridConfig", "SolveResult", "basic_ds_solve", "basic_tr_solve",
    "hybrid_solve", "ParetoArchive", "hypervolume", "mo_driver", "weight_grid",
    "data_profile", "performance_profile",
]
