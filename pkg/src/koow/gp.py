"""Kernel hyperparameter selection by Gaussian-process marginal likelihood.

The GP prior on outcomes has covariance ``gamma * Kx(theta_x) * Ka(theta_a)``
over matched pairs ``(X_i, A_i)`` plus noise ``sigma_sq * I``. Only the product
of the two kernel scales is identifiable, so the treatment kernel keeps
``gamma = 1`` and a single ``gamma`` is tuned. For Gaussian kernels the
``theta`` slots hold lengthscales.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.special import gammaln
from scipy.stats import qmc

from .errors import AllStartsFailed, FactorizationFailure, InputError, MissingOutcome
from .kernels import DEFAULT_RIDGE, fit_moments

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class HyperParams:
    theta_x: float
    theta_a: float
    gamma: float
    sigma_sq: float
    degree_x: int = 1
    degree_a: int = 1
    lml: float = float("nan")
    starts: int = 0

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in ("degree_x", "degree_a")}


@dataclass(frozen=True)
class SearchConfig:
    lower: float = 1e-4
    upper: float = 1e4
    n_starts: int = 8
    max_iter: int = 400
    xatol: float = 1e-4
    fatol: float = 1e-6
    initial: Sequence[Sequence[float]] = ()


def log_marginal_likelihood(K, y, sigma_sq: float) -> float:
    """GP log evidence ``log N(y | 0, K + sigma_sq I)`` via Cholesky.

    Jitter starting at ``1e-8 * trace(K)/n`` is added and escalated tenfold up
    to ``1e-4 * trace(K)/n`` if the factorization fails.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if K.shape != (n, n):
        raise InputError(f"K has shape {K.shape}, expected ({n}, {n})")
    if not sigma_sq > 0:
        raise InputError("sigma_sq must be positive")
    C = K + sigma_sq * np.eye(n)
    base = max(float(np.trace(K)) / n, 0.0)
    extra = 0.0
    while True:
        try:
            L = linalg.cholesky(C + extra * np.eye(n), lower=True, check_finite=True)
            break
        except (linalg.LinAlgError, ValueError):
            extra = 1e-8 * base if extra == 0.0 else extra * 10.0
            if base == 0.0 or extra > 1e-4 * base * (1 + 1e-9):
                raise FactorizationFailure("K + sigma_sq I is not positive definite") from None
    alpha = linalg.solve_triangular(L, y, lower=True)
    return float(-0.5 * alpha @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI)


def _poly_features(F, degree):
    """Unscaled features of ``(1 + theta <f, f'>)^degree`` and their orders.

    Column for multi-index ``alpha`` is ``sqrt(multinomial) * f^alpha``; the
    kernel equals ``sum_alpha theta^{|alpha|} col_alpha col_alpha'``.
    """
    n, q = F.shape
    cols, orders = [np.ones(n)], [0]
    for k in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(q), k):
            counts = np.bincount(combo, minlength=q)
            logc = (gammaln(degree + 1) - gammaln(degree - k + 1)
                    - gammaln(counts + 1).sum())
            cols.append(math.exp(0.5 * logc) * np.prod(F[:, list(combo)], axis=1))
            orders.append(k)
    return np.column_stack(cols), np.array(orders)


class _Evidence:
    """Log evidence as a function of log-hyperparameters for fixed data."""

    def __init__(self, X, A, y, degree_x, degree_a, family_x="poly", family_a="poly",
                 ridge_fraction=DEFAULT_RIDGE):
        self.y = np.asarray(y, dtype=float)
        self.n = self.y.shape[0]
        mx, Lx = fit_moments(X, ridge_fraction)
        ma, La = fit_moments(A, ridge_fraction)
        Fx = (np.atleast_2d(np.asarray(X, float).T).T - mx) @ Lx
        Fa = (np.asarray(A, float).reshape(self.n, -1) - ma) @ La
        self.family = (family_x, family_a)
        self.degrees = (degree_x, degree_a)
        self.low_rank = False
        if family_x == "poly" and family_a == "poly":
            Px, ox = _poly_features(Fx, degree_x)
            Pa, oa = _poly_features(Fa, degree_a)
            D = Px.shape[1] * Pa.shape[1]
            if D <= self.n // 2:
                Phi = (Px[:, :, None] * Pa[:, None, :]).reshape(self.n, D)
                self.ox = np.repeat(ox, Pa.shape[1])
                self.oa = np.tile(oa, Px.shape[1])
                self.G = Phi.T @ Phi
                self.b = Phi.T @ self.y
                self.yy = float(self.y @ self.y)
                self.low_rank = True
        if not self.low_rank:
            self.Sx = self._base(Fx, family_x)
            self.Sa = self._base(Fa, family_a)

    @staticmethod
    def _base(F, family):
        if family == "poly":
            return F @ F.T
        sq = np.einsum("ij,ij->i", F, F)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * F @ F.T, 0.0)
        np.fill_diagonal(d2, 0.0)
        return d2

    def _block(self, S, family, theta, degree):
        if family == "poly":
            return (1.0 + theta * S) ** degree
        return np.exp(-S / (2.0 * theta ** 2))

    def gram(self, theta_x, theta_a, gamma):
        if self.low_rank:
            raise RuntimeError("dense Gram unavailable on the low-rank path")
        Kx = self._block(self.Sx, self.family[0], theta_x, self.degrees[0])
        Ka = self._block(self.Sa, self.family[1], theta_a, self.degrees[1])
        return gamma * Kx * Ka

    def __call__(self, logp) -> float:
        theta_x, theta_a, gamma, sigma_sq = np.exp(logp)
        if not self.low_rank:
            return log_marginal_likelihood(self.gram(theta_x, theta_a, gamma), self.y, sigma_sq)
        s = np.sqrt(gamma * theta_x ** self.ox * theta_a ** self.oa)
        D = s.size
        C = self.G * np.outer(s, s) + sigma_sq * np.eye(D)
        try:
            R = linalg.cholesky(C, lower=True)
        except linalg.LinAlgError:
            raise FactorizationFailure("low-rank evidence factorization failed") from None
        beta = linalg.solve_triangular(R, s * self.b, lower=True)
        quad = (self.yy - beta @ beta) / sigma_sq
        logdet = (self.n - D) * math.log(sigma_sq) + 2.0 * np.log(np.diag(R)).sum()
        return float(-0.5 * quad - 0.5 * logdet - 0.5 * self.n * LOG_2PI)


def tune(dataset, degree_x: int = 1, degree_a: int = 1, search: Optional[SearchConfig] = None,
         seed: int = 0, family_x: str = "poly", family_a: str = "poly",
         ridge_fraction: float = DEFAULT_RIDGE) -> HyperParams:
    """Maximize the GP evidence over ``(theta_x, theta_a, gamma, sigma_sq)``.

    Nelder-Mead in log space, bounded to ``[search.lower, search.upper]``,
    from ``search.n_starts`` scrambled Sobol points (plus any
    ``search.initial`` points). The best end point wins; ties go to the
    earliest start.
    """
    search = search or SearchConfig()
    if dataset.Y is None:
        raise MissingOutcome("tuning requires an outcome column")
    if dataset.n < 5:
        raise InputError("tuning needs at least 5 rows")
    ev = _Evidence(dataset.X, dataset.A, dataset.Y, degree_x, degree_a, family_x, family_a,
                   ridge_fraction)
    lo, hi = math.log(search.lower), math.log(search.upper)
    sobol = qmc.Sobol(d=4, scramble=True, seed=seed)
    pts = lo + (hi - lo) * sobol.random(search.n_starts)
    starts = [np.clip(np.log(np.asarray(p, float)), lo, hi) for p in search.initial]
    starts += list(pts)

    def negll(z):
        z = np.clip(z, lo, hi)
        try:
            val = ev(z)
        except FactorizationFailure:
            return np.inf
        return -val if np.isfinite(val) else np.inf

    best_x, best_f = None, np.inf
    for k, z0 in enumerate(starts):
        f0 = negll(z0)
        res = optimize.minimize(negll, z0, method="Nelder-Mead", bounds=[(lo, hi)] * 4,
                                options={"maxiter": search.max_iter, "xatol": search.xatol,
                                         "fatol": search.fatol})
        x, f = np.clip(res.x, lo, hi), res.fun
        if not f <= f0:
            x, f = z0, f0
        logger.debug("start %d: -lml %.6g -> %.6g", k, f0, f)
        if f < best_f:
            best_x, best_f = x, f
    if best_x is None or not np.isfinite(best_f):
        raise AllStartsFailed("no start produced a finite marginal likelihood")
    theta_x, theta_a, gamma, sigma_sq = (
        float(v) for v in np.clip(np.exp(best_x), search.lower, search.upper))
    return HyperParams(theta_x=theta_x, theta_a=theta_a, gamma=gamma, sigma_sq=sigma_sq,
                       degree_x=degree_x, degree_a=degree_a, lml=float(-best_f),
                       starts=len(starts))


def evidence(dataset, params: HyperParams, family_x="poly", family_a="poly",
             ridge_fraction=DEFAULT_RIDGE) -> float:
    """Log evidence of ``dataset`` at ``params`` (same route ``tune`` uses)."""
    ev = _Evidence(dataset.X, dataset.A, dataset.Y, params.degree_x, params.degree_a,
                   family_x, family_a, ridge_fraction)
    return ev(np.log([params.theta_x, params.theta_a, params.gamma, params.sigma_sq]))
