"""Covariate-balance diagnostics for continuous treatments."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .errors import InputError, ZeroVariance


def weighted_correlation(a, x, w=None) -> float:
    """Pearson correlation of ``a`` and ``x`` under probability weights ``w / sum(w)``.

    Raises :class:`ZeroVariance` when either weighted variance is zero.
    """
    a = np.asarray(a, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    w = np.ones_like(a) if w is None else np.asarray(w, dtype=float).ravel()
    if not (a.shape == x.shape == w.shape):
        raise InputError("a, x and w must have equal length")
    if np.any(w < 0) or not w.sum() > 0:
        raise InputError("weights must be nonnegative with a positive sum")
    pos = w > 0
    ap, xp = a[pos], x[pos]
    if ap.max() == ap.min() or xp.max() == xp.min():
        raise ZeroVariance("weighted variance is zero")
    p = w / w.sum()
    da = a - p @ a
    dx = x - p @ x
    va = p @ (da * da)
    vx = p @ (dx * dx)
    if not (va > 0 and vx > 0):
        raise ZeroVariance("weighted variance is zero")
    r = (p @ (da * dx)) / math.sqrt(va * vx)
    return float(min(1.0, max(-1.0, r)))


def effective_sample_size(w) -> float:
    w = np.asarray(w, dtype=float)
    return float(w.sum() ** 2 / (w @ w))


@dataclass
class BalanceRow:
    name: str
    abs_corr_unweighted: Optional[float]
    abs_corr_weighted: Optional[float]


@dataclass
class BalanceReport:
    rows: List[BalanceRow]
    mean_abs_corr_unweighted: float
    mean_abs_corr_weighted: float
    ess: float
    n: int
    weight_min: float
    weight_max: float
    weight_cv: float

    def to_json(self) -> dict:
        out = asdict(self)
        out["weights"] = {"min": out.pop("weight_min"), "max": out.pop("weight_max"),
                          "cv": out.pop("weight_cv")}
        return out

    def format_table(self) -> str:
        width = max([len("confounder")] + [len(r.name) for r in self.rows])
        fmt = lambda v: "   undefined" if v is None else f"{v:12.4f}"
        lines = [f"{'confounder':<{width}}  {'unweighted':>12}  {'weighted':>12}"]
        for r in self.rows:
            lines.append(f"{r.name:<{width}}  {fmt(r.abs_corr_unweighted)}  "
                         f"{fmt(r.abs_corr_weighted)}")
        lines.append(f"{'mean':<{width}}  {fmt(self.mean_abs_corr_unweighted)}  "
                     f"{fmt(self.mean_abs_corr_weighted)}")
        lines.append(f"ESS {self.ess:.1f} of {self.n}; weights min {self.weight_min:.4g}, "
                     f"max {self.weight_max:.4g}, cv {self.weight_cv:.4g}")
        return "\n".join(lines)


def _abs_corr(a, x, w):
    try:
        return abs(weighted_correlation(a, x, w))
    except ZeroVariance:
        return None


def balance_table(dataset, w) -> BalanceReport:
    """Absolute treatment-confounder correlations before and after weighting.

    Columns with zero (weighted) variance are reported as undefined and left
    out of the means.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (dataset.n,):
        raise InputError(f"weights have shape {w.shape}, expected ({dataset.n},)")
    rows = []
    for k, name in enumerate(dataset.confounder_names):
        x = dataset.X[:, k]
        rows.append(BalanceRow(name, _abs_corr(dataset.A, x, None), _abs_corr(dataset.A, x, w)))

    def mean(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else float("nan")

    mw = w.mean()
    return BalanceReport(
        rows=rows,
        mean_abs_corr_unweighted=mean(r.abs_corr_unweighted for r in rows),
        mean_abs_corr_weighted=mean(r.abs_corr_weighted for r in rows),
        ess=effective_sample_size(w), n=dataset.n,
        weight_min=float(w.min()), weight_max=float(w.max()),
        weight_cv=float(w.std() / mw) if mw > 0 else float("nan"),
    )
