"""Coordinate descent for penalized least squares, solution paths and CV.

The solver also handles the residualized problem used by the
semi-penalized estimator: passing ``proj_col=j`` replaces every column
``x_k`` by ``Q_j x_k`` and ``y`` by ``Q_j y`` without forming the
projected design.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .core import TOL, Dataset, InvalidInputError, Tolerances
from .penalty import LASSO, MCP, PenaltySpec, _pen, _univariate, penalty_derivative, penalty_value


@dataclass(frozen=True)
class LambdaGrid:
    values: np.ndarray
    min_ratio: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1 or np.any(v <= 0):
            raise InvalidInputError("lambda grid must be positive")
        if np.any(np.diff(v) >= 0):
            raise InvalidInputError("lambda grid must be strictly decreasing")
        object.__setattr__(self, "values", v)

    @property
    def n_lambda(self) -> int:
        return self.values.size

    @property
    def lambda_max(self) -> float:
        return float(self.values[0])


@dataclass
class SolveResult:
    beta: np.ndarray
    active: np.ndarray
    converged: bool
    n_sweeps: int
    objective: float
    history: np.ndarray = None


@dataclass
class PathFit:
    lambdas: np.ndarray
    betas: np.ndarray  # p x n_lambda
    active_sets: list
    objectives: np.ndarray
    n_sweeps: np.ndarray
    converged: np.ndarray
    family: str
    gamma: float


@dataclass
class CvResult:
    lambdas: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    lambda_hat: float
    index: int
    seed: int
    folds: np.ndarray
    fold_errors: np.ndarray = field(repr=False)
    path: PathFit = field(default=None, repr=False)


@numba.njit(cache=True, nogil=True)
def _objective(r, b, skip, lam, gamma, family):
    n = r.shape[0]
    f = 0.0
    for i in range(n):
        f += r[i] * r[i]
    f /= 2.0 * n
    for k in range(b.shape[0]):
        if not skip[k]:
            f += _pen(b[k], lam, gamma, family)
    return f


@numba.njit(cache=True, nogil=True)
def _sweep(X, r, b, d, idx, lam, gamma, family, xp, xpn2, c, active):
    """One cyclic pass over ``idx``; returns (max |change|, new activations)."""
    n = X.shape[0]
    use_proj = xp.shape[0] > 0
    if use_proj:
        # keep r exactly orthogonal to the projected-out column
        s = 0.0
        for i in range(n):
            s += xp[i] * r[i]
        s /= xpn2
        for i in range(n):
            r[i] -= s * xp[i]
    maxchg = 0.0
    newact = False
    for t in range(idx.shape[0]):
        k = idx[t]
        g = 0.0
        for i in range(n):
            g += X[i, k] * r[i]
        z = g / n + d[k] * b[k]
        bk = _univariate(z, d[k], lam, gamma, family)
        delta = bk - b[k]
        if delta != 0.0:
            for i in range(n):
                r[i] -= delta * X[i, k]
            if use_proj:
                cd = delta * c[k]
                for i in range(n):
                    r[i] += cd * xp[i]
            b[k] = bk
            if abs(delta) > maxchg:
                maxchg = abs(delta)
            if bk != 0.0 and not active[k]:
                active[k] = True
                newact = True
    return maxchg, newact


@numba.njit(cache=True, nogil=True)
def _cd(X, r, b, d, skip, lam, gamma, family, xp, c, tol, max_sweeps, hist):
    m = X.shape[1]
    xpn2 = 0.0
    for i in range(xp.shape[0]):
        xpn2 += xp[i] * xp[i]
    active = np.zeros(m, dtype=numba.boolean)
    nfree = 0
    for k in range(m):
        if not skip[k]:
            nfree += 1
            if b[k] != 0.0:
                active[k] = True
    full = np.empty(nfree, dtype=np.int64)
    t = 0
    for k in range(m):
        if not skip[k]:
            full[t] = k
            t += 1
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        maxchg, newact = _sweep(X, r, b, d, full, lam, gamma, family, xp, xpn2, c, active)
        if sweeps < hist.shape[0]:
            hist[sweeps] = _objective(r, b, skip, lam, gamma, family)
        sweeps += 1
        if not newact and maxchg < tol:
            converged = True
            break
        na = 0
        for k in range(m):
            if active[k]:
                na += 1
        aidx = np.empty(na, dtype=np.int64)
        t = 0
        for k in range(m):
            if active[k]:
                aidx[t] = k
                t += 1
        while sweeps < max_sweeps:
            maxchg, _ = _sweep(X, r, b, d, aidx, lam, gamma, family, xp, xpn2, c, active)
            if sweeps < hist.shape[0]:
                hist[sweeps] = _objective(r, b, skip, lam, gamma, family)
            sweeps += 1
            if maxchg < tol:
                break
    return sweeps, converged


class _Problem:
    """Design, response and curvatures for one (possibly residualized) fit."""

    def __init__(self, data: Dataset, rows=None, proj_col=None, center_rows=False):
        X = data.X if rows is None else data.X[rows]
        y = data.y if rows is None else data.y[rows]
        self.x_mean = np.zeros(X.shape[1])
        self.y_mean = 0.0
        if center_rows:
            self.x_mean = X.mean(axis=0)
            self.y_mean = float(y.mean())
            X = X - self.x_mean
            y = y - self.y_mean
        self.X = np.asfortranarray(X, dtype=float)
        n, p = self.X.shape
        self.n, self.p = n, p
        self.proj_col = proj_col
        colsq = np.einsum("ij,ij->j", self.X, self.X)
        self.skip = np.array(data.excluded, dtype=bool)
        if proj_col is None:
            self.xp = np.zeros(0)
            self.c = np.zeros(p)
            self.y = np.array(y, dtype=float)
            dsq = colsq
        else:
            xp = self.X[:, proj_col].copy()
            xpn2 = float(xp @ xp)
            if xpn2 == 0.0:
                raise InvalidInputError(f"cannot project out zero column {proj_col}")
            self.xp = xp
            self.c = (self.X.T @ xp) / xpn2
            self.y = y - xp * (float(xp @ y) / xpn2)
            dsq = colsq - self.c ** 2 * xpn2
            self.skip[proj_col] = True
        self.d = np.maximum(dsq, 0.0) / n
        scale = np.maximum(colsq / n, np.finfo(float).tiny)
        # columns annihilated by the projection cannot be fit
        self.skip |= self.d <= 1e-10 * scale
        self.d[self.skip] = 1.0
        self._lmax = None

    def design_cols(self, idx):
        Xs = self.X[:, idx]
        if self.xp.size:
            Xs = Xs - np.outer(self.xp, self.c[idx])
        return Xs

    def residual(self, b):
        nz = np.flatnonzero(b)
        return self.y - self.design_cols(nz) @ b[nz]

    def gradient(self, r):
        # x~_k' r / n ; r is orthogonal to xp so the projection drops out
        g = self.X.T @ r / self.n
        if self.xp.size:
            g -= self.c * (float(self.xp @ r) / self.n)
        return g

    def objective(self, b, spec: PenaltySpec, r=None):
        if r is None:
            r = self.residual(b)
        pen = penalty_value(b[~self.skip], spec).sum()
        return float(r @ r) / (2 * self.n) + float(pen)

    def lambda_max(self):
        if self._lmax is None:
            g = np.abs(self.gradient(self.y))
            g[self.skip] = 0.0
            self._lmax = float(g.max(initial=0.0))
        return self._lmax


def _kkt_violation(prob: _Problem, b, spec: PenaltySpec, r=None):
    if r is None:
        r = prob.residual(b)
    g = prob.gradient(r)
    act = (b != 0) & ~prob.skip
    inact = (b == 0) & ~prob.skip
    v_act = np.abs(-g[act] + penalty_derivative(b[act], spec))
    v_in = np.maximum(np.abs(g[inact]) - spec.lam, 0.0)
    return float(max(v_act.max(initial=0.0), v_in.max(initial=0.0)))


def _polish(prob: _Problem, b, spec: PenaltySpec):
    """Solve the stationarity equations on the current support exactly.

    Accepted only when signs, MCP regimes and inactive-coordinate
    conditions are unchanged and the objective does not increase.
    """
    S = np.flatnonzero(b)
    if S.size == 0 or S.size >= prob.n:
        return b
    XS = prob.design_cols(S)
    G = XS.T @ XS / prob.n
    rhs = XS.T @ prob.y / prob.n
    sgn = np.sign(b[S])
    lam = spec.lam
    if spec.family == LASSO:
        lin = np.ones(S.size, dtype=bool)
    else:
        lin = np.abs(b[S]) < spec.gamma * lam
        G[np.diag_indices_from(G)] -= np.where(lin, 1.0 / spec.gamma, 0.0)
    rhs = rhs - np.where(lin, lam * sgn, 0.0)
    try:
        bs = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return b
    if not np.all(np.isfinite(bs)) or np.any(np.sign(bs) != sgn):
        return b
    if spec.family == MCP and np.any((np.abs(bs) < spec.gamma * lam) != lin):
        return b
    new = np.zeros_like(b)
    new[S] = bs
    r = prob.residual(new)
    g = prob.gradient(r)
    inact = (new == 0) & ~prob.skip
    if np.any(np.abs(g[inact]) > lam * (1 + 1e-12) + 1e-14):
        return b
    f_old = prob.objective(b, spec)
    f_new = prob.objective(new, spec, r)
    if f_new > f_old + 1e-13 * max(1.0, abs(f_old)):
        return b
    return new


def _solve(prob: _Problem, spec: PenaltySpec, b0=None, tol: Tolerances = TOL,
           polish=True, track_objective=False) -> SolveResult:
    if spec.lam >= prob.lambda_max() * (1 - 1e-12):
        # zero is the solution by definition of lambda_max; avoid rounding residue
        b = np.zeros(prob.p)
        obj = prob.objective(b, spec)
        hist = np.array([obj]) if track_objective else None
        return SolveResult(beta=b, active=np.zeros(0, dtype=np.intp), converged=True,
                           n_sweeps=0, objective=obj, history=hist)
    b = np.zeros(prob.p) if b0 is None else np.array(b0, dtype=float, copy=True)
    b[prob.skip] = 0.0
    r = prob.residual(b)
    hist = np.zeros(tol.max_sweeps if track_objective else 0)
    sweeps, conv = _cd(prob.X, r, b, prob.d, prob.skip, float(spec.lam),
                       float(spec.gamma), spec.code, prob.xp, prob.c,
                       float(tol.cd_tol), int(tol.max_sweeps), hist)
    if polish and conv:
        b = _polish(prob, b, spec)
    obj = prob.objective(b, spec)
    if track_objective:
        hist = np.concatenate(([prob.objective(np.asarray(b0) if b0 is not None
                                               else np.zeros(prob.p), spec)],
                               hist[:sweeps]))
    else:
        hist = None
    return SolveResult(beta=b, active=np.flatnonzero(b), converged=bool(conv),
                       n_sweeps=int(sweeps), objective=obj, history=hist)


def _rows_from_mask(weights, n):
    if weights is None:
        return None
    w = np.asarray(weights)
    if w.dtype == bool:
        if w.shape != (n,):
            raise InvalidInputError("observation mask must have length n")
        return np.flatnonzero(w)
    return w.astype(np.intp)


def solve_at_lambda(data: Dataset, spec: PenaltySpec, warm_start=None, weights=None,
                    *, proj_col=None, tol: Tolerances = TOL, polish=True,
                    track_objective=False) -> SolveResult:
    """Minimize ``(1/2n)||y - X b||^2 + sum_k rho(b_k)`` by coordinate descent.

    ``weights`` is an optional boolean mask (or index array) of the rows
    to use. With ``proj_col=j`` the problem is residualized on column j
    and ``beta[j]`` stays 0.
    """
    rows = _rows_from_mask(weights, data.n)
    prob = _Problem(data, rows, proj_col)
    return _solve(prob, spec, warm_start, tol, polish, track_objective)


def kkt_violation(data: Dataset, beta, spec: PenaltySpec, *, proj_col=None, weights=None) -> float:
    """Largest violation of the stationarity conditions at ``beta``."""
    prob = _Problem(data, _rows_from_mask(weights, data.n), proj_col)
    return _kkt_violation(prob, np.asarray(beta, dtype=float), spec)


def objective(data: Dataset, beta, spec: PenaltySpec, *, proj_col=None) -> float:
    prob = _Problem(data, None, proj_col)
    return prob.objective(np.asarray(beta, dtype=float), spec)


def default_min_ratio(n: int, p: int) -> float:
    return 0.05 if p > n else 0.001


def lambda_max(data: Dataset, proj_col=None) -> float:
    return _Problem(data, None, proj_col).lambda_max()


def make_grid(data: Dataset, n_lambda: int = 100, min_ratio: float = None) -> LambdaGrid:
    """Log-spaced decreasing grid from lambda_max down to min_ratio*lambda_max."""
    if min_ratio is None:
        min_ratio = default_min_ratio(data.n, data.p)
    if not 0 < min_ratio < 1:
        raise InvalidInputError("min_ratio must lie in (0, 1)")
    lmax = lambda_max(data)
    if lmax <= 0:
        raise InvalidInputError("lambda_max is zero: response orthogonal to every column")
    if n_lambda == 1:
        return LambdaGrid(np.array([lmax]), min_ratio)
    vals = np.exp(np.linspace(np.log(lmax), np.log(lmax * min_ratio), n_lambda))
    vals[0] = lmax
    return LambdaGrid(vals, min_ratio)


def _path(prob: _Problem, family, gamma, lambdas, tol, polish=True) -> PathFit:
    p, L = prob.p, len(lambdas)
    betas = np.zeros((p, L))
    objs = np.zeros(L)
    sweeps = np.zeros(L, dtype=int)
    conv = np.zeros(L, dtype=bool)
    actives = []
    b = np.zeros(p)
    for i, lam in enumerate(lambdas):
        spec = PenaltySpec(family, float(lam), gamma)
        res = _solve(prob, spec, b, tol, polish)
        b = res.beta
        betas[:, i] = b
        objs[i] = res.objective
        sweeps[i] = res.n_sweeps
        conv[i] = res.converged
        actives.append(res.active)
    return PathFit(np.asarray(lambdas, dtype=float), betas, actives, objs, sweeps,
                   conv, family, gamma)


def solve_path(data: Dataset, family: str, gamma: float, grid: LambdaGrid, *,
               proj_col=None, weights=None, tol: Tolerances = TOL, polish=True) -> PathFit:
    """Warm-started solutions over ``grid`` from the largest lambda down."""
    PenaltySpec(family, 0.0, gamma)
    prob = _Problem(data, _rows_from_mask(weights, data.n), proj_col)
    return _path(prob, family, gamma, grid.values, tol, polish)


def fold_assignment(n: int, n_folds: int, seed: int) -> np.ndarray:
    """Shuffle 0..n-1 with a seeded Philox stream and deal folds round-robin."""
    rng = np.random.Generator(np.random.Philox(seed))
    perm = rng.permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % n_folds
    return folds


def cross_validate(data: Dataset, family: str, gamma: float, grid: LambdaGrid,
                   n_folds: int = 5, seed: int = 0, *, tol: Tolerances = TOL,
                   full_path=True) -> CvResult:
    """K-fold CV of the fully penalized path; picks the lambda minimizing
    mean held-out squared error (ties go to the larger lambda).

    Each training part is re-centered so that held-out predictions carry
    their own intercept.
    """
    n = data.n
    if n_folds < 2:
        raise InvalidInputError("n_folds must be at least 2")
    if n < 2 * n_folds:
        raise InvalidInputError("every fold needs at least 2 observations")
    folds = fold_assignment(n, n_folds, seed)
    L = grid.n_lambda
    sq_err = np.zeros((n_folds, L))
    counts = np.zeros(n_folds)
    for f in range(n_folds):
        train = np.flatnonzero(folds != f)
        test = np.flatnonzero(folds == f)
        prob = _Problem(data, train, center_rows=True)
        fit = _path(prob, family, gamma, grid.values, tol)
        pred = prob.y_mean + (data.X[test] - prob.x_mean) @ fit.betas
        resid = data.y[test][:, None] - pred
        sq_err[f] = (resid ** 2).sum(axis=0)
        counts[f] = test.size
    cv_mean = sq_err.sum(axis=0) / n
    fold_mse = sq_err / counts[:, None]
    cv_se = fold_mse.std(axis=0, ddof=1) / np.sqrt(n_folds)
    idx = int(np.argmin(cv_mean))
    path = solve_path(data, family, gamma, grid, tol=tol) if full_path else None
    return CvResult(grid.values.copy(), cv_mean, cv_se, float(grid.values[idx]), idx,
                    seed, folds, fold_mse, path)
