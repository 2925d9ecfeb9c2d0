"""Worst-case penalized functional covariance and its minimization.

For weights ``w`` on the scaled simplex ``{w >= 0, sum(w) = n}`` and Grams
``Kx`` (confounders) and ``Ka`` (treatment), the squared RKHS distance between
the weighted joint embedding and the embedding of the product of marginals is

    delta_sq(w) = w'Mw / n^2 - 2 w'v / n^3 + s_x s_a / n^4

with ``M = Kx * Ka`` (entrywise), ``v = (Kx 1) * (Ka 1)``, ``s_x = 1'Kx1`` and
``s_a = 1'Ka1``. The penalized objective adds ``lam * |w|^2 / n^2``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import (DimensionMismatch, InputError, NegativeLambda,
                     NonFiniteObjective, NotConverged, TooLarge)
from .kernels import hadamard

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 50_000
POLISH_AFTER = 20


@dataclass(frozen=True)
class BalanceObjective:
    M: np.ndarray
    v: np.ndarray
    s_x: float
    s_a: float
    n: int
    lam: float

    @property
    def const(self) -> float:
        return self.s_x * self.s_a / self.n ** 4

    def gradient(self, w, Mw=None) -> np.ndarray:
        n = self.n
        if Mw is None:
            Mw = self.M @ w
        return 2.0 * (Mw + self.lam * w) / n ** 2 - 2.0 * self.v / n ** 3

    def value(self, w, Mw=None) -> float:
        """Penalized objective ``delta_sq(w) + lam |w|^2 / n^2``."""
        if Mw is None:
            Mw = self.M @ w
        n = self.n
        return float((w @ Mw + self.lam * (w @ w)) / n ** 2 - 2.0 * (w @ self.v) / n ** 3
                     + self.const)


@dataclass
class WeightSolution:
    w: np.ndarray
    objective: float
    delta_sq: float
    kkt_residual: float
    iterations: int
    converged: bool
    lam: float = 0.0

    @property
    def normalized(self) -> np.ndarray:
        return self.w / self.w.sum()

    def report(self) -> dict:
        return {"objective": self.objective, "delta_sq": self.delta_sq,
                "kkt_residual": self.kkt_residual, "iterations": self.iterations,
                "converged": self.converged, "lambda": self.lam}


def build_objective(Kx, Ka, lam: float) -> BalanceObjective:
    """Precompute the quadratic form for a pair of Grams and penalty ``lam``."""
    Kx = np.asarray(Kx, dtype=float)
    Ka = np.asarray(Ka, dtype=float)
    if Kx.ndim != 2 or Kx.shape[0] != Kx.shape[1] or Kx.shape != Ka.shape:
        raise DimensionMismatch(f"Grams must be square and equal-sized: {Kx.shape}, {Ka.shape}")
    if not lam >= 0 or not np.isfinite(lam):
        raise NegativeLambda(f"lambda must be >= 0, got {lam}")
    M = hadamard(Kx, Ka)
    rx = Kx.sum(axis=1)
    ra = Ka.sum(axis=1)
    return BalanceObjective(M=M, v=rx * ra, s_x=float(rx.sum()), s_a=float(ra.sum()),
                            n=Kx.shape[0], lam=float(lam))


def delta_squared(obj: BalanceObjective, w) -> float:
    """Squared worst-case functional covariance of ``w`` (no penalty)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (obj.n,):
        raise DimensionMismatch(f"weights have shape {w.shape}, expected ({obj.n},)")
    n = obj.n
    return float(w @ (obj.M @ w) / n ** 2 - 2.0 * (w @ obj.v) / n ** 3 + obj.const)


def penalized_objective(obj: BalanceObjective, w) -> float:
    w = np.asarray(w, dtype=float)
    if w.shape != (obj.n,):
        raise DimensionMismatch(f"weights have shape {w.shape}, expected ({obj.n},)")
    return obj.value(w)


def project_simplex(z, total: float) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``{w >= 0, sum(w) = total}``.

    Sort-and-threshold: find ``tau`` with ``sum(max(z - tau, 0)) = total``.
    """
    z = np.asarray(z, dtype=float)
    if total <= 0:
        raise InputError("total must be positive")
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - total
    rho = np.count_nonzero(u * np.arange(1, z.size + 1) > css) - 1
    tau = css[rho] / (rho + 1)
    w = np.maximum(z - tau, 0.0)
    # absorb rounding so the sum is exact to working precision
    s = w.sum()
    if s != total:
        active = w > 0
        w[active] += (total - s) / np.count_nonzero(active)
        np.maximum(w, 0.0, out=w)
    return w


def projected_gradient_norm(obj: BalanceObjective, w, grad=None) -> float:
    """Sup-norm of ``w - P(w - grad)``; zero exactly at a minimizer."""
    if grad is None:
        grad = obj.gradient(w)
    return float(np.max(np.abs(w - project_simplex(w - grad, obj.n))))


def kkt_violation(obj: BalanceObjective, w, support_tol: float = 1e-8):
    """Return ``(dual, complementarity, mu)`` violations of the simplex KKT system.

    ``mu`` is the mean gradient over the support. ``dual`` is
    ``max(0, -min(grad - mu))`` and ``complementarity`` is
    ``max |(grad - mu) * w|``.
    """
    g = obj.gradient(w)
    support = w > support_tol
    mu = float(g[support].mean()) if support.any() else float(g.mean())
    r = g - mu
    return float(max(0.0, -r.min())), float(np.max(np.abs(r * w))), mu


def kkt_residual(obj: BalanceObjective, w, grad=None) -> float:
    """Largest of the projected-gradient norm and the two KKT violations.

    Complementarity is scaled by ``1 + |mu|``. This is the quantity the
    solver drives below its tolerance.
    """
    if grad is None:
        grad = obj.gradient(w)
    pg = float(np.max(np.abs(w - project_simplex(w - grad, obj.n))))
    dual, comp, mu = kkt_violation(obj, w)
    return max(pg, dual, comp / (1.0 + abs(mu)))


def power_iteration(M, shift: float = 0.0, iters: int = 30, rtol: float = 1e-6) -> float:
    """Largest eigenvalue of the PSD matrix ``M + shift * I``."""
    n = M.shape[0]
    x = np.ones(n) / np.sqrt(n)
    est = 0.0
    for _ in range(iters):
        y = M @ x + shift * x
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        new = float(x @ y)
        x = y / nrm
        if abs(new - est) <= rtol * abs(new):
            est = new
            break
        est = new
    return max(est, float(np.linalg.norm(M @ x + shift * x)))


def _polish(obj: BalanceObjective, w, support, rounds: int = 10):
    """Minimizer restricted to a guessed support, or None.

    Takes the exact Newton step from ``w`` on the equality-constrained
    quadratic over ``support``. The bordered system is solved by minimum-norm
    least squares, so a singular restricted Hessian (exact balance reachable
    on a whole face) still lands on the nearest optimal point. Coordinates
    that come out negative are dropped and the step recomputed, up to
    ``rounds`` times.
    """
    n = obj.n
    idx = np.nonzero(support)[0]
    for _ in range(rounds):
        k = idx.size
        if k == 0:
            return None
        base = np.zeros(n)
        base[idx] = w[idx]
        g = obj.gradient(base)
        kkt = np.empty((k + 1, k + 1))
        kkt[:k, :k] = obj.M[np.ix_(idx, idx)]
        kkt[:k, :k].flat[::k + 1] += obj.lam
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        kkt[k, k] = 0.0
        rhs = np.empty(k + 1)
        rhs[:k] = -0.5 * n ** 2 * g[idx]
        rhs[k] = n - base.sum()
        try:
            sol = linalg.lstsq(kkt, rhs, lapack_driver="gelsy")[0]
        except (linalg.LinAlgError, ValueError):
            return None
        if not np.all(np.isfinite(sol)):
            return None
        wS = w[idx] + sol[:k]
        if wS.min() >= 0:
            out = np.zeros(n)
            out[idx] = wS
            total = out.sum()
            return out * (n / total) if total > 0 else None
        idx = idx[wS > 0]
    return None


def solve(obj: BalanceObjective, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          raise_on_failure: bool = False, polish: bool = True) -> WeightSolution:
    """Minimize the penalized objective over the scaled simplex.

    Accelerated projected gradient with function-value restarts, started at
    uniform weights. The step is ``1/L`` with ``L`` from power iteration on
    ``2 (M + lam I) / n^2``; the estimate is doubled if a step fails the
    sufficient-decrease test. Iteration stops once the projected-gradient
    sup-norm falls to ``tol`` and the KKT certificate (see
    :func:`kkt_residual`) holds at the same tolerance.

    With ``polish`` (default), once the support of the iterates has been
    stable for ``POLISH_AFTER`` iterations (then twice as long, and so on) an
    exact Newton step restricted to that support is tried; the result is
    accepted only if it is feasible and passes the same stopping test.

    With ``raise_on_failure`` a :class:`NotConverged` carrying the last
    iterate is raised instead of returning ``converged=False``.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    n = obj.n
    w = np.ones(n)
    if n * np.trace(obj.M) == 0.0:
        return _finish(obj, w, obj.M @ w, 0.0, 0, True)

    L = 2.0 * power_iteration(obj.M, obj.lam) / n ** 2
    if not np.isfinite(L) or L <= 0:
        raise NonFiniteObjective("could not estimate the Lipschitz constant")

    Mw = obj.M @ w
    f = obj.value(w, Mw)
    w_prev, Mw_prev = w, Mw
    t = 1.0
    it = 0
    converged = False
    res = np.inf
    support = w > 0
    stable = 0
    for it in range(max_iter + 1):
        g = obj.gradient(w, Mw)
        res = float(np.max(np.abs(w - project_simplex(w - g, n))))
        if not np.isfinite(res) or not np.isfinite(f):
            raise NonFiniteObjective(f"objective became non-finite at iteration {it}")
        if res <= tol:
            res = kkt_residual(obj, w, g)
            if res <= tol:
                converged = True
                break
        if it == max_iter:
            break
        if polish and stable >= POLISH_AFTER:
            # retry a persisting support with geometric back-off
            if stable % POLISH_AFTER == 0 and _is_pow2(stable // POLISH_AFTER):
                z = _polish(obj, w, support)
                if z is not None:
                    Mz = obj.M @ z
                    fz = obj.value(z, Mz)
                    gz = obj.gradient(z, Mz)
                    rz = kkt_residual(obj, z, gz)
                    if rz <= tol and fz <= f + 1e-12 * abs(f):
                        w, Mw, f, res = z, Mz, fz, rz
                        converged = True
                        break
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        y = w + beta * (w - w_prev)
        My = Mw + beta * (Mw - Mw_prev)
        z = project_simplex(y - obj.gradient(y, My) / L, n)
        Mz = obj.M @ z
        fz = obj.value(z, Mz)
        if fz > f:
            # restart: plain projected-gradient step from w, which is monotone
            t_next = 1.0
            while True:
                z = project_simplex(w - g / L, n)
                Mz = obj.M @ z
                fz = obj.value(z, Mz)
                d = z - w
                if fz <= f + g @ d + 0.5 * L * (d @ d) + 1e-15 * abs(f):
                    break
                L *= 2.0
            if fz > f:
                # numerically flat: keep the current iterate
                z, Mz, fz = w, Mw, f
        w_prev, Mw_prev = w, Mw
        w, Mw, f = z, Mz, fz
        t = t_next
        new_support = w > 0
        if np.array_equal(new_support, support):
            stable += 1
        else:
            support, stable = new_support, 0
    sol = _finish(obj, w, Mw, res, it, converged)
    if not converged:
        logger.debug("solver stopped after %d iterations, residual %.3g", it, res)
        if raise_on_failure:
            raise NotConverged(f"no convergence in {max_iter} iterations "
                               f"(residual {res:.3g} > {tol:.3g})", solution=sol)
    return sol


def _is_pow2(k: int) -> bool:
    return k > 0 and k & (k - 1) == 0


def _finish(obj, w, Mw, res, it, converged) -> WeightSolution:
    n = obj.n
    dsq = float(w @ Mw / n ** 2 - 2.0 * (w @ obj.v) / n ** 3 + obj.const)
    return WeightSolution(w=w, objective=obj.value(w, Mw), delta_sq=dsq, kkt_residual=res,
                          iterations=it, converged=converged, lam=obj.lam)


def solve_oracle(obj: BalanceObjective) -> np.ndarray:
    """Exact minimizer for ``n <= 4`` by enumerating every support set.

    On each support ``S`` the equality-constrained problem is solved through
    its KKT system (minimum-norm least squares when singular). Among the
    stationary points that are feasible, the one with the lowest objective is
    returned. Some optimum always has a support on which it is the unique
    affine minimizer, so the enumeration cannot miss it.
    """
    n = obj.n
    if n > 4:
        raise TooLarge(f"oracle supports n <= 4, got {n}")
    Q = 2.0 * (obj.M + obj.lam * np.eye(n)) / n ** 2
    c = 2.0 * obj.v / n ** 3
    best, best_val = None, np.inf
    for size in range(1, n + 1):
        for S in itertools.combinations(range(n), size):
            S = list(S)
            k = len(S)
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = Q[np.ix_(S, S)]
            kkt[:k, k] = -1.0
            kkt[k, :k] = 1.0
            rhs = np.concatenate([c[S], [float(n)]])
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            scale = 1.0 + np.abs(kkt).max() * (1.0 + np.abs(sol).max())
            if np.max(np.abs(kkt @ sol - rhs)) > 1e-10 * scale:
                continue
            wS = sol[:k]
            if wS.min() < -1e-12 * n:
                continue
            w = np.zeros(n)
            w[S] = np.maximum(wS, 0.0)
            w *= n / w.sum()
            val = obj.value(w)
            if val < best_val:
                best, best_val = w, val
    return best
