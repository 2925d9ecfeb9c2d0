"""Percentile bootstrap bands for the dose-response curve.

Each replicate resamples units with replacement and reruns the whole
procedure (moments, Grams, weights, curve) on the resample. Replicate ``b``
draws its indices from ``SeedSequence([seed, b])`` so results do not depend
on scheduling or worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Optional

import numpy as np

from .data import Dataset, PipelineConfig
from .dose_response import CurveEstimate
from .errors import InputError, KOOWError, MissingOutcome, TooManyFailures
from .gp import HyperParams
from .pipeline import compute_weights, estimate_curve, hyperparams

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.2


def resample_indices(n: int, seed: int, b: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
    return rng.integers(0, n, size=n)


def _one_replicate(args):
    dataset, config, hyper, seed, b, retune, grid = args
    boot = dataset.take(resample_indices(dataset.n, seed, b))
    try:
        hp = hyperparams(boot, replace(config, tune=True)) if retune else hyper
        sol = compute_weights(boot, config, hp)
        if not sol.converged:
            return None
        return estimate_curve(boot, sol.w, config, grid).theta_hat
    except KOOWError as exc:
        logger.debug("bootstrap replicate %d failed: %s", b, exc)
        return None


def bootstrap_curve(dataset: Dataset, config: PipelineConfig, B: int, seed: int = 0,
                    hyper: Optional[HyperParams] = None, retune: bool = False,
                    workers: int = 1, point: Optional[CurveEstimate] = None,
                    level: float = 0.95) -> CurveEstimate:
    """Point curve plus pointwise percentile band from ``B`` replicates.

    Hyperparameters are fixed at ``hyper`` (computed on the full sample when
    not given) unless ``retune`` is set. Replicates whose solver does not
    converge, or that raise, are dropped; more than 20% dropped raises
    :class:`TooManyFailures`. The count is stored in ``excluded``.
    """
    if B < 1:
        raise InputError("B must be >= 1")
    if dataset.Y is None:
        raise MissingOutcome("bootstrap requires an outcome column")
    grid = config.grid_points()
    hyper = hyper or hyperparams(dataset, config)
    if point is None:
        sol = compute_weights(dataset, config, hyper)
        point = estimate_curve(dataset, sol.w, config, grid)
    jobs = [(dataset, config, hyper, seed, b, retune, grid) for b in range(1, B + 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            curves = list(ex.map(_one_replicate, jobs, chunksize=max(1, B // (4 * workers))))
    else:
        curves = [_one_replicate(j) for j in jobs]
    ok = [c for c in curves if c is not None]
    excluded = B - len(ok)
    if excluded > MAX_FAILURE_FRACTION * B:
        raise TooManyFailures(f"{excluded} of {B} bootstrap replicates failed",
                              excluded=excluded, total=B)
    alpha = 0.5 * (1.0 - level)
    stack = np.vstack(ok)
    lower, upper = np.quantile(stack, [alpha, 1.0 - alpha], axis=0, method="linear")
    out = replace(point, lower=lower, upper=upper, excluded=excluded)
    bad = out.outside_band()
    if bad.size:
        logger.info("point estimate outside its bootstrap band at %d grid points", bad.size)
    return out
