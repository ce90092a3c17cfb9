"""Data model, standardization and small least-squares kernels."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg


class InvalidInputError(ValueError):
    """Raised when inputs violate a documented precondition."""


class SingularColumnError(ValueError):
    """Raised when projecting onto a column of zero norm."""


@dataclass(frozen=True)
class Tolerances:
    cd_tol: float = 1e-7
    max_sweeps: int = 100_000
    kkt_tol: float = 1e-6
    # x_j'Q x_j below collinear_rel * n marks j as collinear
    collinear_rel: float = 1e-10
    # relative norm below which a column counts as constant
    constant_rel: float = 1e-12
    lstsq_rcond: float = 1e-12


TOL = Tolerances()


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response ``y`` (length n) and predictors ``X`` (n x p).

    ``x_center``/``x_scale``/``y_center`` record the transform applied by
    :func:`standardize` so coefficients can be mapped back to the original
    scale. ``excluded`` flags constant columns, which are kept as zero
    columns and skipped by every penalized fit.
    """

    y: np.ndarray
    X: np.ndarray
    x_center: np.ndarray = None
    x_scale: np.ndarray = None
    y_center: float = 0.0
    excluded: np.ndarray = None
    standardized: bool = False
    col_names: tuple = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InvalidInputError(f"shape mismatch: y {y.shape}, X {X.shape}")
        n, p = X.shape
        if n < 2:
            raise InvalidInputError("need at least 2 observations")
        if p < 1:
            raise InvalidInputError("need at least 1 predictor")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise InvalidInputError("non-finite entries in data")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", np.asfortranarray(_frozen(X)))
        self.X.setflags(write=False)
        if self.x_center is None:
            object.__setattr__(self, "x_center", _frozen(np.zeros(p)))
        if self.x_scale is None:
            object.__setattr__(self, "x_scale", _frozen(np.ones(p)))
        if self.excluded is None:
            exc = np.zeros(p, dtype=bool)
        else:
            exc = np.array(self.excluded, dtype=bool)
        exc.setflags(write=False)
        object.__setattr__(self, "excluded", exc)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def col_norms(self) -> np.ndarray:
        return np.sqrt(np.einsum("ij,ij->j", self.X, self.X))

    def subset_rows(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, y=self.y[rows], X=self.X[rows])

    def to_original_scale(self, beta):
        """Map standardized-scale coefficients to ``(intercept, coef)``."""
        beta = np.asarray(beta, dtype=float)
        coef = np.where(self.excluded, 0.0, beta / self.x_scale)
        intercept = self.y_center - float(self.x_center @ coef)
        return intercept, coef


def as_index_set(indices, p: int) -> np.ndarray:
    """Validate and return a sorted array of distinct 0-based indices."""
    idx = np.unique(np.asarray(indices, dtype=np.intp).ravel())
    if idx.size and (idx[0] < 0 or idx[-1] >= p):
        raise InvalidInputError(f"index out of range for p={p}")
    return idx


def standardize(data: Dataset, tol: Tolerances = TOL) -> Dataset:
    """Center every column and scale it to squared norm n; center y.

    Constant columns are zeroed and flagged in ``excluded``. The transform
    composes with any earlier one so the recorded center/scale always refer
    to the raw data.
    """
    n = data.n
    X = np.array(data.X, dtype=float)
    y = np.array(data.y, dtype=float)
    mean = X.mean(axis=0)
    Xc = X - mean
    norms = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    ref = np.maximum(np.abs(X).max(axis=0), 1.0) * np.sqrt(n)
    constant = (norms <= tol.constant_rel * ref) | data.excluded
    scale = np.where(constant, 1.0, norms / np.sqrt(n))
    Xs = Xc / scale
    Xs[:, constant] = 0.0
    ymean = float(y.mean())
    # compose with the previous transform: raw = prev_scale*(prev) + prev_center
    center = data.x_center + data.x_scale * mean
    total_scale = data.x_scale * scale
    return Dataset(
        y=y - ymean,
        X=Xs,
        x_center=center,
        x_scale=total_scale,
        y_center=data.y_center + ymean,
        excluded=constant,
        standardized=True,
        col_names=data.col_names,
    )


def project_out_column(v, j: int, data: Dataset) -> np.ndarray:
    """Return ``Q_j v = v - x_j (x_j'v) / (x_j'x_j)``."""
    v = np.asarray(v, dtype=float)
    x = data.X[:, j]
    xx = float(x @ x)
    if data.excluded[j] or xx == 0.0:
        raise SingularColumnError(f"column {j} has zero norm")
    return v - x * (float(x @ v) / xx)


def _lstsq(A, b, tol: Tolerances = TOL):
    # gelsy: complete orthogonal factorization with column pivoting, min-norm
    coef, *_ = scipy.linalg.lstsq(A, b, cond=tol.lstsq_rcond, lapack_driver="gelsy")
    return coef


def project_out_set(v, A, data: Dataset, tol: Tolerances = TOL) -> np.ndarray:
    """Residual of ``v`` after least-squares regression on columns ``A``."""
    v = np.asarray(v, dtype=float)
    A = np.asarray(A, dtype=np.intp)
    if A.size == 0:
        return v.copy()
    XA = data.X[:, A]
    return v - XA @ _lstsq(XA, v, tol)


def ols_fit(y, A, data: Dataset, tol: Tolerances = TOL) -> np.ndarray:
    """Least-squares coefficients of ``y`` on columns ``A`` (min-norm)."""
    A = np.asarray(A, dtype=np.intp)
    if A.size == 0:
        return np.zeros(0)
    return _lstsq(data.X[:, A], np.asarray(y, dtype=float), tol)


def read_csv(path, header: bool = False) -> Dataset:
    """Read a dataset whose first column is the response.

    Raises :class:`InvalidInputError` naming the offending line on any
    malformed row.
    """
    rows = []
    names = None
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if header and names is None:
                names = tuple(c.strip() for c in row)
                width = len(names)
                continue
            if width is None:
                width = len(row)
            if len(row) != width:
                raise InvalidInputError(
                    f"line {lineno}: expected {width} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise InvalidInputError(f"line {lineno}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise InvalidInputError(f"line {lineno}: non-finite value")
            rows.append(vals)
    if width is None or width < 2:
        raise InvalidInputError("need a response column and at least one predictor")
    arr = np.array(rows, dtype=float).reshape(-1, width)
    col_names = names[1:] if names else None
    return Dataset(y=arr[:, 0], X=arr[:, 1:], col_names=col_names)


def write_csv(path, data: Dataset, header: bool = True) -> None:
    """Write ``data`` in the layout accepted by :func:`read_csv`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            names = data.col_names or tuple(f"x{j + 1}" for j in range(data.p))
            w.writerow(("y",) + tuple(names))
        for yi, xi in zip(data.y, data.X):
            w.writerow([repr(float(yi))] + [repr(float(v)) for v in xi])
