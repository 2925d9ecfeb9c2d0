"""Command-line interface: ``koow weights | curve | simulate``.

Exit codes: 0 success, 1 usage or input error, 2 solver did not converge
(outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import errors
from .balance import build_objective, solve
from .bootstrap import bootstrap_curve
from .data import PipelineConfig, load_csv
from .diagnostics import balance_table
from .pipeline import estimate_curve, grams, hyperparams
from .simulation import SCENARIOS, results_csv, run_study

logger = logging.getLogger("koow")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2

ERROR_CODES = {
    errors.MissingColumn: "E_MISSING_COLUMN",
    errors.NonNumericCell: "E_NON_NUMERIC",
    errors.TooFewRows: "E_TOO_FEW_ROWS",
    errors.ConstantTreatment: "E_CONSTANT_TREATMENT",
    errors.NegativeLambda: "E_NEGATIVE_LAMBDA",
    errors.MissingOutcome: "E_MISSING_OUTCOME",
    errors.InvalidSpan: "E_INVALID_SPAN",
    errors.DegenerateMoments: "E_DEGENERATE_MOMENTS",
    errors.RankDeficient: "E_RANK_DEFICIENT",
    errors.TooManyFailures: "E_BOOTSTRAP_FAILURES",
    errors.AllStartsFailed: "E_TUNING_FAILED",
    errors.NonFiniteObjective: "E_NON_FINITE",
    errors.InputError: "E_INPUT",
    errors.KOOWError: "E_NUMERICAL",
}

NUMERICAL_FAILURES = (errors.NotConverged, errors.TooManyFailures, errors.NonFiniteObjective,
                      errors.FactorizationFailure, errors.AllStartsFailed)

DEFAULTS = {
    "outcome": None, "lam": 1.0, "kernel_x": "poly", "kernel_a": "poly",
    "degree_x": 1, "degree_a": 1, "tune": False, "theta_x": 1.0, "theta_a": 1.0,
    "gamma": 1.0, "lengthscale_x": 1.0, "lengthscale_a": 1.0, "seed": 0, "tol": 1e-7,
    "max_iter": 50_000, "ridge_fraction": 1e-6, "dump_gram": False, "workers": 1,
    "estimator": "local:2", "span": 0.75, "grid": "-3:3:1000", "bootstrap": 0,
    "retune": False,
    "scenario": "linear", "R": 100, "n": 1000, "lambdas": "0,1,10",
    "methods": "koow,stable_ipw,unweighted", "estimators": "local,poly",
}


class UsageError(errors.InputError):
    pass


def _error_code(exc) -> str:
    for cls in type(exc).__mro__:
        if cls in ERROR_CODES:
            return ERROR_CODES[cls]
    return "E_INTERNAL"


def _dump_json(path, payload):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    text = json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _num(v):
    return format(float(v), ".17g")


def _add_common(p):
    p.add_argument("--config", help="JSON file of option values; flags override it")
    p.add_argument("--data", required=False, help="input CSV with a header row")
    p.add_argument("--treatment", help="treatment column name")
    p.add_argument("--confounders", help="comma-separated confounder column names")
    p.add_argument("--outcome", help="outcome column name")
    p.add_argument("--lambda", dest="lam", type=float, help="penalization (>= 0, default 1)")
    p.add_argument("--kernel-x", choices=("poly", "gaussian"))
    p.add_argument("--kernel-a", choices=("poly", "gaussian"))
    p.add_argument("--degree-x", type=int)
    p.add_argument("--degree-a", type=int)
    p.add_argument("--tune", action="store_const", const=True,
                   help="tune hyperparameters by GP marginal likelihood (needs --outcome)")
    p.add_argument("--theta-x", type=float)
    p.add_argument("--theta-a", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lengthscale-x", type=float)
    p.add_argument("--lengthscale-a", type=float)
    p.add_argument("--ridge-fraction", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--dump-gram", action="store_const", const=True,
                   help="also write the two Gram matrices as CSV")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="koow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    pw = sub.add_parser("weights", help="compute balancing weights and diagnostics")
    _add_common(pw)

    pc = sub.add_parser("curve", help="weights plus a dose-response curve")
    _add_common(pc)
    pc.add_argument("--estimator", help="poly:K (K in 1..3) or local:P (P in 0..2)")
    pc.add_argument("--span", type=float)
    pc.add_argument("--grid", help="min:max:count")
    pc.add_argument("--bootstrap", type=int, help="number of bootstrap replicates (0 = none)")
    pc.add_argument("--retune", action="store_const", const=True,
                    help="re-tune hyperparameters inside each bootstrap replicate")

    ps = sub.add_parser("simulate", help="replicated simulation study")
    ps.add_argument("--config")
    ps.add_argument("--scenario", help="comma-separated: " + ",".join(SCENARIOS))
    ps.add_argument("--R", type=int)
    ps.add_argument("--n", type=int)
    ps.add_argument("--lambdas")
    ps.add_argument("--methods")
    ps.add_argument("--estimators")
    ps.add_argument("--seed", type=int)
    ps.add_argument("--out", help="results CSV path (default: standard output)")
    ps.add_argument("--workers", type=int)
    ps.add_argument("--tol", type=float)
    ps.add_argument("--max-iter", type=int)
    return parser


def _resolve(args):
    """Fill unset options from --config, then from DEFAULTS.

    ``--out`` defaults to the prefix ``koow`` except for ``simulate``, which
    writes to standard output.
    """
    opts = {k: v for k, v in vars(args).items()}
    if opts.get("config"):
        try:
            conf = json.loads(Path(opts["config"]).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"--config: cannot read {opts['config']}: {exc}") from None
        for key, val in conf.items():
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lam"
            if key in opts and opts[key] is None:
                opts[key] = val
    for key, val in DEFAULTS.items():
        if key in opts and opts[key] is None:
            opts[key] = val
    if opts["command"] != "simulate" and opts["out"] is None:
        opts["out"] = "koow"
    return argparse.Namespace(**opts)


def _parse_estimator(text):
    try:
        kind, deg = text.split(":")
        deg = int(deg)
    except ValueError:
        raise UsageError(f"--estimator must look like poly:3 or local:2, got {text!r}") from None
    if kind == "poly" and deg in (1, 2, 3):
        return {"estimator": "poly", "poly_degree": deg}
    if kind == "local" and deg in (0, 1, 2):
        return {"estimator": "local", "local_degree": deg}
    raise UsageError(f"--estimator: unsupported value {text!r}")


def _parse_grid(text):
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise UsageError(f"--grid must look like -3:3:1000, got {text!r}") from None
    if not (lo < hi and count >= 2):
        raise UsageError("--grid needs min < max and count >= 2")
    return (lo, hi, count)


def _config_from(a, curve=False) -> PipelineConfig:
    if a.lam < 0 or not math.isfinite(a.lam):
        raise errors.NegativeLambda(f"--lambda must be >= 0, got {a.lam}")
    if a.tol <= 0:
        raise UsageError("--tol must be positive")
    if a.max_iter < 1:
        raise UsageError("--max-iter must be >= 1")
    if a.workers < 1:
        raise UsageError("--workers must be >= 1")
    for flag in ("theta_x", "theta_a", "gamma", "lengthscale_x", "lengthscale_a"):
        if not getattr(a, flag) > 0:
            raise UsageError(f"--{flag.replace('_', '-')} must be positive")
    if a.ridge_fraction < 0:
        raise UsageError("--ridge-fraction must be >= 0")
    if a.tune and a.outcome is None:
        raise errors.MissingOutcome("tuning requires an outcome column (--tune needs --outcome)")
    kw = dict(kernel_x=a.kernel_x, kernel_a=a.kernel_a, degree_x=a.degree_x,
              degree_a=a.degree_a, theta_x=a.theta_x, theta_a=a.theta_a, gamma=a.gamma,
              lengthscale_x=a.lengthscale_x, lengthscale_a=a.lengthscale_a, tune=bool(a.tune),
              lam=a.lam, tol=a.tol, max_iter=a.max_iter, ridge_fraction=a.ridge_fraction,
              seed=a.seed)
    if curve:
        if not 0 < a.span <= 1:
            raise errors.InvalidSpan(f"--span must be in (0, 1], got {a.span}")
        if a.bootstrap < 0:
            raise UsageError("--bootstrap must be >= 0")
        kw.update(_parse_estimator(a.estimator), span=a.span, grid=_parse_grid(a.grid))
    return PipelineConfig(**kw)


def _load(a):
    for flag in ("data", "treatment", "confounders"):
        if not getattr(a, flag):
            raise UsageError(f"--{flag} is required")
    cols = [c.strip() for c in a.confounders.split(",") if c.strip()]
    return load_csv(a.data, a.treatment, a.outcome, cols)


def _write_gram(path, K):
    np.savetxt(path, K, delimiter=",", fmt="%.17g")


def _weights_stage(a, config, ds):
    out = a.out
    logger.info("loaded %d rows, %d confounders", ds.n, ds.p)
    hyper = hyperparams(ds, config)
    if config.tune:
        logger.info("tuned hyperparameters: theta_x=%.4g theta_a=%.4g gamma=%.4g sigma_sq=%.4g",
                    hyper.theta_x, hyper.theta_a, hyper.gamma, hyper.sigma_sq)
        _dump_json(f"{out}_hyperparams.json", hyper.to_json())
    pair = grams(ds, config, hyper)
    if a.dump_gram:
        _write_gram(f"{out}_gram_x.csv", pair.Kx)
        _write_gram(f"{out}_gram_a.csv", pair.Ka)
    sol = solve(build_objective(pair.Kx, pair.Ka, config.lam), config.tol, config.max_iter)
    logger.info("solver: %s after %d iterations, residual %.3g",
                "converged" if sol.converged else "NOT converged", sol.iterations,
                sol.kkt_residual)
    with open(f"{out}_weights.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_index", "weight", "weight_normalized"])
        for i, (wi, wn) in enumerate(zip(sol.w, sol.normalized)):
            writer.writerow([i, _num(wi), _num(wn)])
    _dump_json(f"{out}_solver.json", sol.report())
    report = balance_table(ds, sol.w)
    _dump_json(f"{out}_balance.json", report.to_json())
    print(report.format_table())
    return hyper, sol


def cmd_weights(a) -> int:
    config = _config_from(a)
    ds = _load(a)
    _, sol = _weights_stage(a, config, ds)
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def cmd_curve(a) -> int:
    config = _config_from(a, curve=True)
    ds = _load(a)
    if ds.Y is None:
        raise errors.MissingOutcome("curve estimation requires --outcome")
    hyper, sol = _weights_stage(a, config, ds)
    curve = estimate_curve(ds, sol.w, config)
    if a.bootstrap > 0:
        logger.info("bootstrap: %d replicates", a.bootstrap)
        curve = bootstrap_curve(ds, config, a.bootstrap, seed=config.seed, hyper=hyper,
                                retune=bool(a.retune), workers=a.workers, point=curve)
        _dump_json(f"{a.out}_bootstrap.json", {"B": a.bootstrap, "excluded": curve.excluded,
                                               "seed": config.seed, "retune": bool(a.retune)})
    with open(f"{a.out}_curve.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["a", "theta_hat", "lower", "upper"])
        for g in range(curve.grid.size):
            lo = "" if curve.lower is None else _num(curve.lower[g])
            hi = "" if curve.upper is None else _num(curve.upper[g])
            writer.writerow([_num(curve.grid[g]), _num(curve.theta_hat[g]), lo, hi])
    logger.info("wrote %s_curve.csv (%d grid points)", a.out, curve.grid.size)
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def _split(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def cmd_simulate(a) -> int:
    scen = _split(a.scenario)
    for s in scen:
        if s not in SCENARIOS:
            raise UsageError(f"--scenario: unknown scenario {s!r}; choose from "
                             f"{', '.join(SCENARIOS)}")
    methods = _split(a.methods)
    for m in methods:
        if m not in ("koow", "stable_ipw", "unweighted"):
            raise UsageError(f"--methods: unknown method {m!r}")
    try:
        lambdas = [float(v) for v in _split(a.lambdas)] if "koow" in methods else []
    except ValueError:
        raise UsageError(f"--lambdas must be comma-separated numbers, got {a.lambdas!r}") from None
    if any(l < 0 for l in lambdas):
        raise errors.NegativeLambda("--lambdas must all be >= 0")
    estimators = _split(a.estimators)
    for e in estimators:
        if e not in ("local", "poly"):
            raise UsageError(f"--estimators: unknown estimator {e!r}")
    if a.R < 1 or a.n < 10:
        raise UsageError("--R must be >= 1 and --n >= 10")
    if a.workers < 1:
        raise UsageError("--workers must be >= 1")
    config = PipelineConfig(tune=True, tol=a.tol, max_iter=a.max_iter, seed=a.seed)
    rows = run_study(scen, lambdas=lambdas, baselines=[m for m in methods if m != "koow"],
                     R=a.R, n=a.n, seed=a.seed, estimators=estimators, config=config,
                     workers=a.workers)
    text = results_csv(rows)
    if a.out and a.out != "-":
        Path(a.out).write_text(text, encoding="utf-8")
        logger.info("wrote %s (%d rows)", a.out, len(rows))
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"weights": cmd_weights, "curve": cmd_curve, "simulate": cmd_simulate}


def _join_grid(argv):
    # argparse takes "-3:3:1000" for an option; bind it to --grid explicitly
    out, it = [], iter(argv)
    for tok in it:
        if tok == "--grid":
            out.append("--grid=" + next(it, ""))
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_grid(sys.argv[1:] if argv is None else list(argv)))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="koow: %(message)s", stream=sys.stderr)
    try:
        a = _resolve(args)
        return COMMANDS[args.command](a)
    except errors.InputError as exc:
        print(f"koow: error[{_error_code(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"koow: error[E_IO]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NUMERICAL_FAILURES as exc:
        print(f"koow: error[{_error_code(exc)}]: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except errors.KOOWError as exc:
        print(f"koow: error[{_error_code(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
