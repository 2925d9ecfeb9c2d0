"""Kernel optimal orthogonality weighting for continuous treatments.

Weights on the scaled simplex that minimize the worst-case (RKHS) covariance
between a continuous treatment and the confounders, plus weighted
dose-response estimation, balance diagnostics and bootstrap bands.
"""

from .balance import (BalanceObjective, WeightSolution, build_objective, delta_squared,
                      kkt_residual, penalized_objective, project_simplex, solve, solve_oracle)
from .bootstrap import bootstrap_curve
from .data import Dataset, PipelineConfig, load_csv, write_csv
from .diagnostics import BalanceReport, balance_table, effective_sample_size, weighted_correlation
from .dose_response import (CurveEstimate, evaluate_parametric, weighted_local_poly,
                            weighted_polyfit)
from .gp import HyperParams, SearchConfig, log_marginal_likelihood, tune
from .kernels import (GaussianKernel, GramPair, PolynomialMahalanobisKernel, fit_moments, gram,
                      hadamard)

__version__ = "0.1.0"
