"""Mahalanobis-scaled kernels and their Gram matrices.

Both kernel families whiten their input with the sample mean and a
ridge-stabilised inverse sample covariance fitted on the training rows:

    phi(z) = L^T (z - mu),    L L^T = (S + eps * diag(S) + delta * I)^{-1}

The polynomial kernel is ``gamma * (1 + theta * <phi(z), phi(z')>) ** degree``
and the Gaussian kernel is ``gamma * exp(-|phi(z) - phi(z')|^2 / (2 l^2))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .errors import DegenerateMoments, DimensionMismatch, InputError

DEFAULT_RIDGE = 1e-6


def _as_2d(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2:
        raise DimensionMismatch(f"expected a 1-d or 2-d array, got shape {Z.shape}")
    return Z


def fit_moments(Z, ridge_fraction: float = DEFAULT_RIDGE) -> Tuple[np.ndarray, np.ndarray]:
    """Sample mean and lower-triangular factor of the regularised precision.

    Parameters
    ----------
    Z : array, shape (n, q) or (n,)
    ridge_fraction : float
        Fraction of each variance added to the covariance diagonal before
        inversion. Zero variances are lifted by an extra multiple of the
        identity when ``ridge_fraction > 0``.

    Returns
    -------
    mean : array, shape (q,)
    factor : array, shape (q, q)
        Lower-triangular ``L`` with ``L @ L.T`` equal to the inverse of the
        regularised covariance (denominator ``n - 1``).
    """
    Z = _as_2d(Z)
    n, q = Z.shape
    if n < 2:
        raise DegenerateMoments("need at least two rows to fit moments")
    if ridge_fraction < 0:
        raise InputError("ridge_fraction must be >= 0")
    mean = Z.mean(axis=0)
    cov = np.atleast_2d(np.cov(Z, rowvar=False, ddof=1))
    diag = np.diag(cov).copy()
    if ridge_fraction == 0.0 and np.any(diag <= 0):
        raise DegenerateMoments("constant column in moment fit with ridge_fraction = 0")
    reg = cov + ridge_fraction * np.diag(diag)
    if ridge_fraction > 0 and np.any(diag <= 0):
        scale = diag.mean() if diag.mean() > 0 else 1.0
        reg += ridge_fraction * scale * np.eye(q)
    try:
        chol = linalg.cholesky(reg, lower=True)
    except linalg.LinAlgError:
        raise DegenerateMoments("sample covariance is singular; use ridge_fraction > 0") from None
    if np.min(np.abs(np.diag(chol))) <= 1e-12 * np.sqrt(np.max(diag)):
        raise DegenerateMoments("sample covariance is numerically singular")
    precision = linalg.cho_solve((chol, True), np.eye(q))
    precision = 0.5 * (precision + precision.T)
    factor = linalg.cholesky(precision, lower=True)
    return mean, factor


@dataclass(frozen=True)
class _MahalanobisKernel:
    gamma: float = 1.0
    ridge_fraction: float = DEFAULT_RIDGE
    mean: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    factor: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def fitted(self) -> bool:
        return self.mean is not None

    def fit(self, Z):
        """Return a copy whose whitening moments are fitted on ``Z``."""
        mean, factor = fit_moments(Z, self.ridge_fraction)
        return replace(self, mean=mean, factor=factor)

    def whiten(self, Z) -> np.ndarray:
        if not self.fitted:
            raise InputError("kernel moments are not fitted; call fit() first")
        Z = _as_2d(Z)
        if Z.shape[1] != self.mean.shape[0]:
            raise DimensionMismatch(
                f"kernel fitted on {self.mean.shape[0]} columns, got {Z.shape[1]}")
        return (Z - self.mean) @ self.factor

    def __call__(self, Z1, Z2=None) -> np.ndarray:
        F1 = self.whiten(Z1)
        F2 = F1 if Z2 is None else self.whiten(Z2)
        return self._from_features(F1, F2)


@dataclass(frozen=True)
class PolynomialMahalanobisKernel(_MahalanobisKernel):
    """``gamma * (1 + theta * (z - mu)^T S^{-1} (z' - mu)) ** degree``."""

    theta: float = 1.0
    degree: int = 1

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError("gamma must be positive")
        if not self.theta >= 0:
            raise InputError("theta must be nonnegative")
        if int(self.degree) != self.degree or self.degree < 1:
            raise InputError("degree must be a positive integer")

    def _from_features(self, F1, F2):
        return self.gamma * (1.0 + self.theta * (F1 @ F2.T)) ** int(self.degree)


@dataclass(frozen=True)
class GaussianKernel(_MahalanobisKernel):
    """``gamma * exp(-|phi(z) - phi(z')|^2 / (2 lengthscale^2))`` on whitened inputs."""

    lengthscale: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError("gamma must be positive")
        if not self.lengthscale > 0:
            raise InputError("lengthscale must be positive")

    def _from_features(self, F1, F2):
        sq1 = np.einsum("ij,ij->i", F1, F1)
        sq2 = np.einsum("ij,ij->i", F2, F2)
        d2 = np.maximum(sq1[:, None] + sq2[None, :] - 2.0 * (F1 @ F2.T), 0.0)
        if F1 is F2:
            np.fill_diagonal(d2, 0.0)
        return self.gamma * np.exp(-d2 / (2.0 * self.lengthscale ** 2))


def gram(kernel, Z) -> np.ndarray:
    """Symmetric Gram matrix of ``kernel`` over the rows of ``Z``.

    The kernel must already be fitted (its moments come from the training
    sample, which is usually ``Z`` itself).
    """
    K = kernel(Z)
    return 0.5 * (K + K.T)


def hadamard(Kx, Ka) -> np.ndarray:
    """Entrywise product: the Gram of the product kernel on matched pairs."""
    Kx = np.asarray(Kx, dtype=float)
    Ka = np.asarray(Ka, dtype=float)
    if Kx.shape != Ka.shape or Kx.ndim != 2 or Kx.shape[0] != Kx.shape[1]:
        raise DimensionMismatch(f"Gram shapes differ: {Kx.shape} vs {Ka.shape}")
    return Kx * Ka


def jitter(K, scale: float = 1e-8) -> float:
    """Diagonal jitter ``scale * trace(K) / n`` used before factorizations."""
    n = K.shape[0]
    return scale * max(float(np.trace(K)) / n, 0.0)


@dataclass(frozen=True)
class GramPair:
    Kx: np.ndarray
    Ka: np.ndarray

    def __post_init__(self):
        if self.Kx.shape != self.Ka.shape:
            raise DimensionMismatch(f"Gram shapes differ: {self.Kx.shape} vs {self.Ka.shape}")

    @property
    def product(self) -> np.ndarray:
        return hadamard(self.Kx, self.Ka)


def make_kernel(family: str, *, gamma=1.0, theta=1.0, degree=1, lengthscale=1.0,
                ridge_fraction=DEFAULT_RIDGE):
    if family == "poly":
        return PolynomialMahalanobisKernel(gamma=gamma, theta=theta, degree=degree,
                                           ridge_fraction=ridge_fraction)
    if family == "gaussian":
        return GaussianKernel(gamma=gamma, lengthscale=lengthscale,
                              ridge_fraction=ridge_fraction)
    raise InputError(f"unknown kernel family {family!r}")


def gram_pair(X, A, kernel_x, kernel_a) -> GramPair:
    """Fit both kernels on (X, A) and return their Grams."""
    kx = kernel_x.fit(X)
    ka = kernel_a.fit(A)
    return GramPair(gram(kx, X), gram(ka, A))
