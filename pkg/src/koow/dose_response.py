"""Weighted dose-response estimators: global polynomial and local polynomial."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyNeighborhood, InputError, InvalidSpan, RankDeficient


@dataclass
class CurveEstimate:
    grid: np.ndarray
    theta_hat: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    estimator: str = ""
    excluded: int = 0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.theta_hat = np.asarray(self.theta_hat, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.theta_hat.shape:
            raise InputError("grid and theta_hat must be 1-d and equal length")
        if self.grid.size > 1 and not np.all(np.diff(self.grid) > 0):
            raise InputError("grid must be strictly increasing")

    @property
    def has_bands(self) -> bool:
        return self.lower is not None

    def outside_band(self) -> np.ndarray:
        """Grid indices where the point estimate falls outside its own band."""
        if not self.has_bands:
            return np.array([], dtype=int)
        return np.nonzero((self.theta_hat < self.lower) | (self.theta_hat > self.upper))[0]


def _check_weights(A, Y, w):
    A = np.asarray(A, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    w = np.ones_like(A) if w is None else np.asarray(w, dtype=float).ravel()
    if not (A.shape == Y.shape == w.shape):
        raise InputError("A, Y and w must have equal length")
    if np.any(w < 0) or not w.sum() > 0:
        raise InputError("weights must be nonnegative with a positive sum")
    return A, Y, w


def weighted_polyfit(A, Y, w, degree: int) -> np.ndarray:
    """Coefficients ``beta[0..degree]`` minimizing ``sum w (Y - sum beta_j A^j)^2``.

    The design is column-scaled and solved by SVD least squares with relative
    singular-value cutoff 1e-12 (a pseudo-inverse when near-singular).
    """
    A, Y, w = _check_weights(A, Y, w)
    if degree < 0:
        raise InputError("degree must be nonnegative")
    support = np.unique(A[w > 0])
    if support.size < degree + 1:
        raise RankDeficient(f"{support.size} distinct weighted treatment values, "
                            f"need {degree + 1} for degree {degree}")
    V = np.vander(A, degree + 1, increasing=True)
    scale = np.abs(V).max(axis=0)
    scale[scale == 0] = 1.0
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(sw[:, None] * (V / scale), sw * Y, rcond=1e-12)
    return coef / scale


def evaluate_parametric(coefficients, grid, estimator: str = "") -> CurveEstimate:
    """Evaluate ``sum_j beta_j a^j`` on the grid by Horner's rule."""
    coef = np.asarray(coefficients, dtype=float)
    grid = np.asarray(grid, dtype=float)
    out = np.zeros_like(grid)
    for c in coef[::-1]:
        out = out * grid + c
    return CurveEstimate(grid=grid, theta_hat=out,
                         estimator=estimator or f"poly:{coef.size - 1}")


def tricube(u):
    u = np.abs(u)
    return np.where(u < 1.0, (1.0 - u ** 3) ** 3, 0.0)


def weighted_local_poly(A, Y, w, degree: int = 2, span: float = 0.75, grid=None) -> CurveEstimate:
    """Nearest-neighbour tricube local polynomial regression.

    At each grid point ``a0`` the bandwidth is the distance to the
    ``ceil(span * n)``-th nearest treatment value, the local weights are
    ``w * tricube((A - a0) / h)`` and the estimate is the intercept of the
    weighted degree-``degree`` fit centred at ``a0``. Where fewer than
    ``degree + 1`` distinct treatment values carry positive local weight, the
    degree is lowered (down to a local weighted mean).
    """
    A, Y, w = _check_weights(A, Y, w)
    if degree not in (0, 1, 2):
        raise InputError("local degree must be 0, 1 or 2")
    if not 0 < span <= 1:
        raise InvalidSpan(f"span must be in (0, 1], got {span}")
    grid = np.asarray(grid if grid is not None else np.linspace(-3, 3, 1000), dtype=float)
    n = A.size
    k = min(max(int(math.ceil(span * n - 1e-12)), 1), n)
    diff = A[None, :] - grid[:, None]
    dist = np.abs(diff)
    h = np.partition(dist, k - 1, axis=1)[:, k - 1]
    safe_h = np.where(h > 0, h, 1.0)
    U = diff / safe_h[:, None]
    LW = w[None, :] * np.where(h[:, None] > 0, tricube(U), (dist == 0).astype(float))
    total = LW.sum(axis=1)
    if np.any(total <= 0):
        bad = grid[np.argmax(total <= 0)]
        raise EmptyNeighborhood(f"no positive local weight at grid point {bad!r}")
    LW /= total[:, None]

    # batched weighted normal equations in the scaled local coordinate u
    p = degree
    powers = [np.ones_like(U)]
    for _ in range(2 * p):
        powers.append(powers[-1] * U)
    mom = np.stack([np.einsum("gi,gi->g", LW, P) for P in powers], axis=1)
    rhs = np.stack([np.einsum("gi,gi->g", LW, powers[j] * Y) for j in range(p + 1)], axis=1)
    gram = np.empty((grid.size, p + 1, p + 1))
    for i in range(p + 1):
        for j in range(p + 1):
            gram[:, i, j] = mom[:, i + j]
    npos = np.count_nonzero(LW > 0, axis=1)
    ok = npos >= p + 1
    if p > 0:
        cond = np.full(grid.size, np.inf)
        cond[ok] = np.linalg.cond(gram[ok])
        ok &= cond < 1e12
    theta = np.empty(grid.size)
    if ok.any():
        theta[ok] = np.linalg.solve(gram[ok], rhs[ok][..., None])[:, 0, 0]
    for g in np.nonzero(~ok)[0]:
        pos = LW[g] > 0
        u = U[g, pos]
        theta[g] = _local_fit(u, Y[pos], LW[g, pos], min(p, np.unique(u).size - 1))
    return CurveEstimate(grid=grid, theta_hat=theta, estimator=f"local:{degree}:{span:g}")


def _local_fit(u, y, lw, degree):
    while degree > 0:
        V = np.vander(u, degree + 1, increasing=True)
        sw = np.sqrt(lw / lw.sum())
        Vw = sw[:, None] * V
        s = np.linalg.svd(Vw, compute_uv=False)
        if s[-1] > 1e-10 * s[0]:
            coef, *_ = np.linalg.lstsq(Vw, sw * y, rcond=None)
            return float(coef[0])
        degree -= 1
    return float(np.sum(lw * y) / np.sum(lw))
