"""Semi-penalized inference with direct FDR control for sparse linear models."""

from .core import (TOL, Dataset, InvalidInputError, SingularColumnError, Tolerances,
                   ols_fit, project_out_column, project_out_set, read_csv, standardize,
                   write_csv)
from .penalty import LASSO, MCP, PenaltySpec, penalty_derivative, penalty_value, \
    univariate_minimizer
from .cd_solver import (CvResult, LambdaGrid, PathFit, cross_validate, make_grid,
                        solve_at_lambda, solve_path)
from .semipenalized import (SpidrFit, alternative_expression_check, attach_inference,
                            covariance, estimate_sigma2, fit_all, fit_one)
from .fdr import (FdrCurve, SelectionResult, estimate_dispersion_A, fdr_curve, fmp,
                  normal_tail, select)
from .oracle import IdealFit, ideal_fit, signal_strength, stickiness
from .pipeline import SpidrResult, run_spidr

__version__ = "0.1.0"
