"""End-to-end weighting and curve estimation for one dataset."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .balance import WeightSolution, build_objective, solve
from .data import Dataset, PipelineConfig
from .dose_response import (CurveEstimate, evaluate_parametric, weighted_local_poly,
                            weighted_polyfit)
from .errors import InputError, MissingOutcome
from .gp import HyperParams, tune
from .kernels import GramPair, gram_pair, make_kernel


@dataclass
class PipelineResult:
    hyper: HyperParams
    solution: WeightSolution
    curve: Optional[CurveEstimate] = None


def hyperparams(dataset: Dataset, config: PipelineConfig) -> HyperParams:
    """Tuned hyperparameters when ``config.tune`` is set, else the configured ones."""
    if config.tune:
        if dataset.Y is None:
            raise MissingOutcome("tuning requires an outcome column")
        return tune(dataset, config.degree_x, config.degree_a, seed=config.seed,
                    family_x=config.kernel_x, family_a=config.kernel_a,
                    ridge_fraction=config.ridge_fraction)
    tx = config.theta_x if config.kernel_x == "poly" else config.lengthscale_x
    ta = config.theta_a if config.kernel_a == "poly" else config.lengthscale_a
    return HyperParams(theta_x=tx, theta_a=ta, gamma=config.gamma,
                       sigma_sq=config.sigma_sq if config.sigma_sq else float("nan"),
                       degree_x=config.degree_x, degree_a=config.degree_a)


def kernels_for(config: PipelineConfig, hyper: HyperParams):
    kx = make_kernel(config.kernel_x, gamma=hyper.gamma, theta=hyper.theta_x,
                     degree=hyper.degree_x, lengthscale=hyper.theta_x,
                     ridge_fraction=config.ridge_fraction)
    ka = make_kernel(config.kernel_a, gamma=1.0, theta=hyper.theta_a, degree=hyper.degree_a,
                     lengthscale=hyper.theta_a, ridge_fraction=config.ridge_fraction)
    return kx, ka


def grams(dataset: Dataset, config: PipelineConfig, hyper: HyperParams) -> GramPair:
    kx, ka = kernels_for(config, hyper)
    return gram_pair(dataset.X, dataset.A, kx, ka)


def compute_weights(dataset: Dataset, config: PipelineConfig, hyper: HyperParams,
                    lam: Optional[float] = None) -> WeightSolution:
    pair = grams(dataset, config, hyper)
    obj = build_objective(pair.Kx, pair.Ka, config.lam if lam is None else lam)
    return solve(obj, tol=config.tol, max_iter=config.max_iter)


def estimate_curve(dataset: Dataset, w, config: PipelineConfig, grid=None) -> CurveEstimate:
    """Weighted regression of Y on A alone, evaluated on the configured grid."""
    if dataset.Y is None:
        raise MissingOutcome("curve estimation requires an outcome column")
    grid = config.grid_points() if grid is None else np.asarray(grid, dtype=float)
    if config.estimator == "poly":
        coef = weighted_polyfit(dataset.A, dataset.Y, w, config.poly_degree)
        return evaluate_parametric(coef, grid)
    if config.estimator == "local":
        return weighted_local_poly(dataset.A, dataset.Y, w, config.local_degree, config.span,
                                   grid)
    raise InputError(f"unknown estimator {config.estimator!r}")


def run(dataset: Dataset, config: PipelineConfig, hyper: Optional[HyperParams] = None,
        curve: bool = True) -> PipelineResult:
    hyper = hyper or hyperparams(dataset, config)
    sol = compute_weights(dataset, config, hyper)
    est = estimate_curve(dataset, sol.w, config) if curve and dataset.Y is not None else None
    return PipelineResult(hyper=hyper, solution=sol, curve=est)
