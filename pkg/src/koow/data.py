"""Observational data container, pipeline configuration and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (ConstantTreatment, InputError, InvalidSpan, MissingColumn,
                     NegativeLambda, NonNumericCell, TooFewRows)

KERNEL_FAMILIES = ("poly", "gaussian")


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Confounders ``X`` (n, p), treatment ``A`` (n,) and optional outcome ``Y``.

    Arrays are copied and made read-only on construction.
    """

    X: np.ndarray
    A: np.ndarray
    Y: Optional[np.ndarray] = None
    confounder_names: tuple = ()
    treatment_name: str = "a"
    outcome_name: Optional[str] = "y"

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        A = np.asarray(self.A, dtype=float).ravel()
        if X.ndim != 2:
            raise InputError("X must be a 2-d array")
        n, p = X.shape
        if A.shape[0] != n:
            raise InputError(f"A has length {A.shape[0]}, expected {n}")
        if n < 2:
            raise TooFewRows(f"need at least 2 rows, got {n}")
        if p < 1:
            raise InputError("need at least one confounder")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(A))):
            raise InputError("X and A must be finite")
        if A.max() == A.min():
            raise ConstantTreatment("treatment has zero sample variance")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "A", _frozen(A))
        if self.Y is not None:
            Y = np.asarray(self.Y, dtype=float).ravel()
            if Y.shape[0] != n:
                raise InputError(f"Y has length {Y.shape[0]}, expected {n}")
            if not np.all(np.isfinite(Y)):
                raise InputError("Y must be finite")
            object.__setattr__(self, "Y", _frozen(Y))
        names = tuple(self.confounder_names) or tuple(f"x{k + 1}" for k in range(p))
        if len(names) != p:
            raise InputError(f"{len(names)} confounder names for {p} columns")
        object.__setattr__(self, "confounder_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def take(self, idx) -> "Dataset":
        """Row subset (with repetition allowed), as used by the bootstrap."""
        idx = np.asarray(idx)
        return replace(self, X=self.X[idx], A=self.A[idx],
                       Y=None if self.Y is None else self.Y[idx])


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to go from a Dataset to weights and a curve.

    ``theta_x``, ``theta_a`` and ``gamma`` are ignored when ``tune`` is set.
    ``estimator`` is ``"poly"`` (global polynomial of ``poly_degree``) or
    ``"local"`` (local polynomial of ``local_degree`` with ``span``).
    """

    kernel_x: str = "poly"
    kernel_a: str = "poly"
    degree_x: int = 1
    degree_a: int = 1
    theta_x: float = 1.0
    theta_a: float = 1.0
    gamma: float = 1.0
    lengthscale_x: float = 1.0
    lengthscale_a: float = 1.0
    sigma_sq: Optional[float] = None
    tune: bool = False
    lam: float = 1.0
    estimator: str = "local"
    poly_degree: int = 3
    local_degree: int = 2
    span: float = 0.75
    grid: tuple = (-3.0, 3.0, 1000)
    tol: float = 1e-7
    max_iter: int = 50_000
    ridge_fraction: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise NegativeLambda(f"lambda must be >= 0, got {self.lam}")
        for fam in (self.kernel_x, self.kernel_a):
            if fam not in KERNEL_FAMILIES:
                raise InputError(f"unknown kernel family {fam!r}")
        if self.degree_x < 1 or self.degree_a < 1:
            raise InputError("kernel degrees must be >= 1")
        if not self.tune:
            for name in ("theta_x", "theta_a", "gamma", "lengthscale_x", "lengthscale_a"):
                if not getattr(self, name) > 0:
                    raise InputError(f"{name} must be positive")
        if self.estimator not in ("poly", "local"):
            raise InputError(f"unknown estimator {self.estimator!r}")
        if self.poly_degree not in (1, 2, 3):
            raise InputError("polynomial degree must be 1, 2 or 3")
        if self.local_degree not in (0, 1, 2):
            raise InputError("local degree must be 0, 1 or 2")
        if not 0 < self.span <= 1:
            raise InvalidSpan(f"span must be in (0, 1], got {self.span}")
        lo, hi, count = self.grid
        if int(count) < 2 or not lo < hi:
            raise InputError("grid needs min < max and count >= 2")
        if self.tol <= 0 or self.max_iter < 1:
            raise InputError("solver tolerance must be positive and max_iter >= 1")

    def grid_points(self) -> np.ndarray:
        lo, hi, count = self.grid
        return np.linspace(lo, hi, int(count))


def load_csv(path, treatment_col: str, outcome_col: Optional[str] = None,
             confounder_cols: Sequence[str] = ()) -> Dataset:
    """Read a headed, comma-separated file into a :class:`Dataset`.

    Rows keep file order. No scaling is applied. Every selected cell must
    parse as a finite number; missing values are an error.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TooFewRows(f"{path}: empty file") from None
        wanted = [treatment_col, *confounder_cols]
        if outcome_col is not None:
            wanted.append(outcome_col)
        for name in wanted:
            if name not in header:
                raise MissingColumn(name)
        if not confounder_cols:
            raise InputError("at least one confounder column is required")
        cols = {name: header.index(name) for name in wanted}
        values = {name: [] for name in wanted}
        for rowno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            for name, j in cols.items():
                cell = row[j].strip() if j < len(row) else ""
                try:
                    val = float(cell)
                except ValueError:
                    raise NonNumericCell(rowno, name, cell) from None
                if not math.isfinite(val):
                    raise NonNumericCell(rowno, name, cell)
                values[name].append(val)
    n = len(values[treatment_col])
    if n < 2:
        raise TooFewRows(f"need at least 2 data rows, got {n}")
    X = np.column_stack([values[c] for c in confounder_cols])
    Y = None if outcome_col is None else values[outcome_col]
    return Dataset(X=X, A=values[treatment_col], Y=Y,
                   confounder_names=tuple(confounder_cols),
                   treatment_name=treatment_col, outcome_name=outcome_col)


def write_csv(dataset: Dataset, path) -> None:
    """Write a dataset so that :func:`load_csv` reproduces it bit-exactly."""
    header = [dataset.treatment_name, *dataset.confounder_names]
    cols = [dataset.A, *dataset.X.T]
    if dataset.Y is not None:
        header.append(dataset.outcome_name or "y")
        cols.append(dataset.Y)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*cols):
            writer.writerow([format(v, ".17g") for v in row])
