"""Simulation scenarios, a stable-IPW baseline, and IAB / IRMSE scoring.

Data-generating process (three treatment mechanisms):

    X_k ~ N(0, 5), k = 1..5;   S = sum_k X_k
    A = beta0 + beta1 * S**d + N(0, 5)
    Y = 0.75 A + 0.05 A^2 + 0.01 A^3 + 1.5 S + 1.125 A S

Because E[S] = 0 the true dose-response curve is 0.75 a + 0.05 a^2 + 0.01 a^3.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .balance import build_objective, solve
from .data import Dataset, PipelineConfig
from .errors import GridMismatch, InputError, KOOWError, SingularDesign
from .pipeline import estimate_curve, grams, hyperparams

logger = logging.getLogger(__name__)

TRUE_COEFFICIENTS = np.array([0.0, 0.75, 0.05, 0.01])


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    beta0: float
    beta1: float
    d: int
    n: int = 1000
    n_confounders: int = 5
    confounder_var: float = 5.0
    treatment_noise_var: float = 5.0
    outcome_noise_sd: float = 0.0
    confounding: float = 1.0
    grid: tuple = (-3.0, 3.0, 1000)

    def grid_points(self) -> np.ndarray:
        lo, hi, count = self.grid
        return np.linspace(lo, hi, int(count))


SCENARIOS = {
    "linear": ScenarioSpec("linear", 0.0, 1.0, 1),
    "quadratic": ScenarioSpec("quadratic", -3.0, 0.25, 2),
    "cubic": ScenarioSpec("cubic", -2.5, 0.05, 3),
}


def scenario(name: str, **overrides) -> ScenarioSpec:
    try:
        spec = SCENARIOS[name]
    except KeyError:
        raise InputError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return replace(spec, **overrides)


def true_curve(grid) -> np.ndarray:
    a = np.asarray(grid, dtype=float)
    return 0.75 * a + 0.05 * a ** 2 + 0.01 * a ** 3


def generate(spec: ScenarioSpec, seed) -> Tuple[Dataset, np.ndarray]:
    """Draw one dataset; returns it with the true curve's polynomial coefficients.

    ``spec.confounding`` scales both confounder terms of the outcome (0 turns
    confounding off); ``spec.outcome_noise_sd`` adds Gaussian outcome noise.
    """
    rng = np.random.default_rng(seed)
    n, p = spec.n, spec.n_confounders
    X = rng.normal(0.0, np.sqrt(spec.confounder_var), size=(n, p))
    S = X.sum(axis=1)
    A = spec.beta0 + spec.beta1 * S ** spec.d + rng.normal(0.0, np.sqrt(spec.treatment_noise_var), n)
    Y = 0.75 * A + 0.05 * A ** 2 + 0.01 * A ** 3 + spec.confounding * (1.5 * S + 1.125 * A * S)
    if spec.outcome_noise_sd > 0:
        Y = Y + rng.normal(0.0, spec.outcome_noise_sd, n)
    ds = Dataset(X=X, A=A, Y=Y, confounder_names=tuple(f"x{k + 1}" for k in range(p)))
    return ds, TRUE_COEFFICIENTS.copy()


def stable_ipw_weights(dataset: Dataset, truncate: float = 0.99, return_info: bool = False):
    """Stabilized inverse generalized-propensity weights ``f(A) / f(A | X)``.

    ``f(A | X)`` is the normal density from a least-squares fit of A on X
    (maximum-likelihood residual variance); ``f(A)`` is a normal fit to A.
    Weights above the ``truncate`` quantile are set to it, then all weights
    are rescaled to sum to n. With ``return_info`` the number of truncated
    weights is returned as well.
    """
    n, p = dataset.n, dataset.p
    if n <= p + 2:
        raise SingularDesign(f"need n > p + 2 rows for the treatment model, got n={n}, p={p}")
    D = np.column_stack([np.ones(n), dataset.X])
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise SingularDesign("confounder design matrix is rank deficient")
    A = dataset.A
    coef, *_ = np.linalg.lstsq(D, A, rcond=None)
    resid = A - D @ coef
    cond_sd = np.sqrt(np.mean(resid ** 2))
    if cond_sd == 0:
        raise SingularDesign("treatment is an exact linear function of the confounders")
    log_w = (stats.norm.logpdf(A, A.mean(), A.std())
             - stats.norm.logpdf(A, D @ coef, cond_sd))
    w = np.exp(log_w - log_w.max())
    cap = np.quantile(w, truncate)
    n_trunc = int(np.count_nonzero(w > cap))
    w = np.minimum(w, cap)
    w *= n / w.sum()
    return (w, n_trunc) if return_info else w


def iab_irmse(estimates, truth) -> Tuple[float, float]:
    """Integrated absolute bias and integrated RMSE over a common grid.

    ``estimates`` is an (R, G) array (or a sequence of length-G curves) and
    ``truth`` the length-G true curve; integration is the grid average.
    """
    est = np.atleast_2d(np.asarray([getattr(e, "theta_hat", e) for e in estimates]
                                   if not isinstance(estimates, np.ndarray) else estimates,
                                   dtype=float))
    truth = np.asarray(truth, dtype=float).ravel()
    if est.shape[0] < 1:
        raise InputError("need at least one replicate")
    if est.shape[1] != truth.shape[0]:
        raise GridMismatch(f"estimates have {est.shape[1]} grid points, truth has {truth.shape[0]}")
    err = est - truth
    iab = float(np.mean(np.abs(err.mean(axis=0))))
    irmse = float(np.mean(np.sqrt(np.mean(err ** 2, axis=0))))
    return iab, irmse


ESTIMATORS = {
    "local": {"estimator": "local", "local_degree": 2},
    "poly": {"estimator": "poly", "poly_degree": 3},
}


def _replicate(args):
    spec, config, lambdas, baselines, estimators, seed = args
    ds, _ = generate(spec, seed)
    grid = spec.grid_points()
    out: Dict[tuple, Optional[np.ndarray]] = {}
    weights: Dict[tuple, Optional[np.ndarray]] = {}
    if lambdas:
        try:
            hyper = hyperparams(ds, config)
            pair = grams(ds, config, hyper)
        except KOOWError as exc:
            logger.warning("replicate %s: tuning failed: %s", seed, exc)
            pair = None
        for lam in lambdas:
            w = None
            if pair is not None:
                sol = solve(build_objective(pair.Kx, pair.Ka, lam), config.tol, config.max_iter)
                w = sol.w if sol.converged else None
            weights[("koow", float(lam))] = w
    for name in baselines:
        if name == "unweighted":
            weights[(name, None)] = np.ones(ds.n)
        elif name == "stable_ipw":
            try:
                weights[(name, None)] = stable_ipw_weights(ds)
            except KOOWError:
                weights[(name, None)] = None
        else:
            raise InputError(f"unknown method {name!r}")
    for (method, lam), w in weights.items():
        for est in estimators:
            key = (method, lam, est)
            if w is None:
                out[key] = None
                continue
            try:
                out[key] = estimate_curve(ds, w, replace(config, **ESTIMATORS[est]), grid).theta_hat
            except KOOWError:
                out[key] = None
    return out


def replicate_seed(seed: int, scenario_index: int, r: int):
    return np.random.SeedSequence([seed, scenario_index, r])


def run_study(scenarios: Sequence[str] = ("linear", "quadratic", "cubic"),
              lambdas: Sequence[float] = (0.0, 1.0, 10.0),
              baselines: Sequence[str] = ("stable_ipw", "unweighted"),
              R: int = 100, n: int = 1000, seed: int = 0,
              estimators: Sequence[str] = ("local", "poly"),
              config: Optional[PipelineConfig] = None, workers: int = 1,
              spec_overrides: Optional[dict] = None) -> List[dict]:
    """Replicated comparison of KOOW (one row per lambda) against baselines.

    Each replicate draws a fresh dataset from ``SeedSequence([seed, s, r])``,
    tunes hyperparameters once (when ``config.tune``) and reuses them across
    lambdas. Replicates that fail (tuning error, solver non-convergence,
    estimator error) are counted per cell and left out of that cell.
    """
    if R < 1:
        raise InputError("R must be >= 1")
    for est in estimators:
        if est not in ESTIMATORS:
            raise InputError(f"unknown estimator {est!r}")
    config = config or PipelineConfig(tune=True)
    rows = []
    for s_idx, name in enumerate(scenarios):
        spec = scenario(name, n=n, **(spec_overrides or {}))
        truth = true_curve(spec.grid_points())
        jobs = [(spec, config, tuple(lambdas), tuple(baselines), tuple(estimators),
                 replicate_seed(seed, s_idx, r)) for r in range(R)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(_replicate, jobs))
        else:
            results = [_replicate(j) for j in jobs]
        keys = [("koow", float(l)) for l in lambdas] + [(b, None) for b in baselines]
        for method, lam in keys:
            for est in estimators:
                curves = [res[(method, lam, est)] for res in results]
                ok = [c for c in curves if c is not None]
                iab = irmse = None
                if ok:
                    iab, irmse = iab_irmse(np.vstack(ok), truth)
                rows.append({"scenario": name, "method": method, "lambda": lam,
                             "estimator": est, "iab": iab, "irmse": irmse,
                             "failures": len(curves) - len(ok), "replicates": R})
    return rows


RESULT_COLUMNS = ("scenario", "method", "lambda", "estimator", "iab", "irmse", "failures")


def results_csv(rows: Iterable[dict]) -> str:
    """Render study rows as CSV text (empty fields for failed cells)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow(["" if row[c] is None else
                         (format(row[c], ".17g") if isinstance(row[c], float) else row[c])
                         for c in RESULT_COLUMNS])
    return buf.getvalue()


def table_layout(rows: Iterable[dict], estimator: str) -> str:
    """Methods by scenarios, each cell ``IAB (IRMSE)``."""
    rows = [r for r in rows if r["estimator"] == estimator]
    scen = list(dict.fromkeys(r["scenario"] for r in rows))
    methods = list(dict.fromkeys(
        (r["method"], r["lambda"]) for r in rows))
    cell = {(r["scenario"], r["method"], r["lambda"]): r for r in rows}
    label = lambda m, l: f"KOOW lambda={l:g}" if m == "koow" else m
    lines = [f"{'':<18}" + "".join(f"{s:>16}" for s in scen)]
    for m, l in methods:
        parts = []
        for s in scen:
            r = cell.get((s, m, l))
            parts.append(f"{'':>16}" if r is None or r["iab"] is None
                         else f"{r['iab']:.2f} ({r['irmse']:.2f})".rjust(16))
        lines.append(f"{label(m, l):<18}" + "".join(parts))
    return "\n".join(lines)
