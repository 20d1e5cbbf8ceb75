from grsvdcalc.bounds import (
    BoundCoefficients,
    BoundReport,
    coefficients_tau_rho,
    power_iteration_bounds,
    theorem_bounds,
)
from grsvdcalc.daproblem import DaScenario, assemble_da_matrix, covariance_case
from grsvdcalc.experiments import ExperimentRecord, run_covariance_comparison, run_sweep
from grsvdcalc.formatting import MarkdownFormatter, PlainFormatter
from grsvdcalc.grsvd import empirical_error_stats, generalized_rsvd
from grsvdcalc.sampling import CovarianceOperator, SeedSpec

__all__ = [
    "BoundCoefficients",
    "BoundReport",
    "CovarianceOperator",
    "DaScenario",
    "ExperimentRecord",
    "MarkdownFormatter",
    "PlainFormatter",
    "SeedSpec",
    "assemble_da_matrix",
    "coefficients_tau_rho",
    "covariance_case",
    "empirical_error_stats",
    "generalized_rsvd",
    "power_iteration_bounds",
    "run_covariance_comparison",
    "run_sweep",
    "theorem_bounds",
]
