"""Semi-penalized per-coefficient estimates, their variances and the
split-refit error-variance estimator."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import cd_solver
from .core import TOL, Dataset, InvalidInputError, Tolerances, _lstsq, project_out_set
from .penalty import MCP, PenaltySpec, penalty_derivative


@dataclass
class OneFit:
    j: int
    beta_j: float
    s_hat: np.ndarray
    beta_on_s: np.ndarray
    converged: bool
    n_sweeps: int = 0


@dataclass
class SpidrFit:
    beta_hat: np.ndarray
    s_hat: list
    beta_on_s: list
    converged: np.ndarray
    excluded: np.ndarray
    spec: PenaltySpec
    se: np.ndarray = None
    z: np.ndarray = None
    sigma2_hat: float = None
    collinear: np.ndarray = None

    @property
    def p(self) -> int:
        return self.beta_hat.size

    @property
    def lambda_hat(self) -> float:
        return self.spec.lam

    @property
    def usable(self) -> np.ndarray:
        """Coefficients with a valid standard error."""
        if self.collinear is None:
            return ~self.excluded
        return ~self.excluded & ~self.collinear


@dataclass
class Sigma2Result:
    value: float
    replicates: np.ndarray
    support: np.ndarray
    truncated: bool
    denominator: str


def fit_one(j: int, data: Dataset, spec: PenaltySpec, warm_start=None,
            tol: Tolerances = TOL) -> OneFit:
    """Estimate beta_j with every other coefficient penalized.

    The penalized part is solved on the design residualized on x_j; beta_j
    is then the least-squares coefficient of x_j on the partial residual.
    """
    if data.excluded[j]:
        return OneFit(j, 0.0, np.zeros(0, dtype=np.intp), np.zeros(0), True)
    if data.p == 1:
        x = data.X[:, 0]
        return OneFit(j, float(x @ data.y / (x @ x)), np.zeros(0, dtype=np.intp),
                      np.zeros(0), True)
    b0 = None
    if warm_start is not None:
        b0 = np.array(warm_start, dtype=float, copy=True)
        b0[j] = 0.0
    res = cd_solver.solve_at_lambda(data, spec, b0, proj_col=j, tol=tol)
    b = res.beta
    S = res.active
    x = data.X[:, j]
    partial = data.y - data.X[:, S] @ b[S]
    beta_j = float(x @ partial / (x @ x))
    return OneFit(j, beta_j, S, b[S].copy(), res.converged, res.n_sweeps)


def fit_all(data: Dataset, spec: PenaltySpec, warm_start=None, n_jobs: int = 1,
            tol: Tolerances = TOL) -> SpidrFit:
    """Run :func:`fit_one` for every column; results are merged by index."""
    p = data.p

    def one(j):
        return fit_one(j, data, spec, warm_start, tol)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            fits = list(ex.map(one, range(p)))
    else:
        fits = [one(j) for j in range(p)]
    return SpidrFit(
        beta_hat=np.array([f.beta_j for f in fits]),
        s_hat=[f.s_hat for f in fits],
        beta_on_s=[f.beta_on_s for f in fits],
        converged=np.array([f.converged for f in fits]),
        excluded=np.array(data.excluded, dtype=bool),
        spec=spec,
    )


def _projected_col(j, S, data):
    return project_out_set(data.X[:, j], S, data)


def alternative_expression_check(j: int, fit: SpidrFit, data: Dataset,
                                 spec: PenaltySpec = None):
    """|beta_j - beta_j recomputed from the KKT-based closed form|.

    Returns ``None`` when the check is skipped (singular Gram matrix on the
    companion support, or an excluded column).
    """
    spec = fit.spec if spec is None else spec
    if fit.excluded[j]:
        return None
    S = np.asarray(fit.s_hat[j], dtype=np.intp)
    x = data.X[:, j]
    n = data.n
    qx = _projected_col(j, S, data)
    den = float(x @ qx)
    if den <= 0:
        return None
    qy = project_out_set(data.y, S, data)
    term = qy
    if S.size:
        XS = data.X[:, S]
        sigma = XS.T @ XS / n
        if np.linalg.cond(sigma) > 1e12:
            return None
        rho_dot = penalty_derivative(fit.beta_on_s[j], spec)
        term = qy + XS @ np.linalg.solve(sigma, rho_dot)
    alt = float(x @ term) / den
    return abs(alt - fit.beta_hat[j])


def _split_rows(n, rng):
    perm = rng.permutation(n)
    n1 = (n + 1) // 2
    return np.sort(perm[:n1]), np.sort(perm[n1:])


def estimate_sigma2(data: Dataset, family: str = MCP, gamma: float = 6.0, grid=None,
                    n_repeats: int = 10, seed: int = 0, *, support=None, coef=None,
                    n_folds: int = 5, denominator: str = "augmented",
                    tol: Tolerances = TOL) -> Sigma2Result:
    """Split-refit estimate of the error variance.

    ``support``/``coef`` describe the full-data penalized fit at the
    cross-validated lambda; they are computed here when not supplied.
    Each repeat fits least squares on a random half of the rows and scores
    the other half, dividing by ``n2 + |S|`` (``denominator="augmented"``) or
    ``n2 - |S|`` (``"classical"``).
    """
    n = data.n
    if n < 4:
        raise InvalidInputError("need n >= 4 for split-refit variance")
    if denominator not in ("augmented", "classical"):
        raise InvalidInputError("denominator must be 'augmented' or 'classical'")
    if support is None:
        if grid is None:
            grid = cd_solver.make_grid(data)
        cv = cd_solver.cross_validate(data, family, gamma, grid, n_folds, seed, tol=tol)
        coef = cv.path.betas[:, cv.index]
        support = np.flatnonzero(coef)
    support = np.asarray(support, dtype=np.intp)
    n1 = (n + 1) // 2
    truncated = False
    if support.size >= n1:
        if coef is None:
            raise InvalidInputError("support too large to refit and no coefficients given")
        order = np.argsort(-np.abs(np.asarray(coef)[support]), kind="stable")
        support = np.sort(support[order[: n1 - 1]])
        truncated = True
    reps = np.empty(n_repeats)
    children = np.random.SeedSequence(seed).spawn(n_repeats)
    for r, ss in enumerate(children):
        rng = np.random.Generator(np.random.Philox(ss))
        d1, d2 = _split_rows(n, rng)
        if support.size:
            b1 = _lstsq(data.X[d1][:, support], data.y[d1], tol)
            resid = data.y[d2] - data.X[d2][:, support] @ b1
        else:
            resid = data.y[d2]
        k = support.size
        dof = d2.size + k if denominator == "augmented" else d2.size - k
        if dof <= 0:
            raise InvalidInputError("nonpositive degrees of freedom in variance refit")
        reps[r] = float(resid @ resid) / dof
    return Sigma2Result(float(reps.mean()), reps, support, truncated, denominator)


def attach_inference(fit: SpidrFit, data: Dataset, sigma2_hat: float,
                     tol: Tolerances = TOL) -> SpidrFit:
    """Add standard errors ``sigma2_hat / x_j'Q x_j`` and z-statistics."""
    if not sigma2_hat > 0:
        raise InvalidInputError("sigma2_hat must be positive")
    p, n = fit.p, data.n
    se = np.full(p, np.nan)
    z = np.zeros(p)
    collinear = np.zeros(p, dtype=bool)
    for j in range(p):
        if fit.excluded[j]:
            continue
        x = data.X[:, j]
        m2 = float(x @ _projected_col(j, fit.s_hat[j], data))
        if m2 <= tol.collinear_rel * n:
            collinear[j] = True
            continue
        se[j] = np.sqrt(sigma2_hat / m2)
        z[j] = fit.beta_hat[j] / se[j]
    return replace(fit, se=se, z=z, sigma2_hat=float(sigma2_hat), collinear=collinear)


def covariance(j: int, k: int, fit: SpidrFit, data: Dataset, sigma2_hat: float = None,
               tol: Tolerances = TOL) -> float:
    """Estimated covariance between beta_hat_j and beta_hat_k."""
    s2 = fit.sigma2_hat if sigma2_hat is None else sigma2_hat
    qj = _projected_col(j, fit.s_hat[j], data)
    qk = _projected_col(k, fit.s_hat[k], data)
    mj = float(data.X[:, j] @ qj)
    mk = float(data.X[:, k] @ qk)
    if fit.excluded[j] or fit.excluded[k] or min(mj, mk) <= tol.collinear_rel * data.n:
        raise InvalidInputError("collinear or excluded coefficient has no covariance")
    return s2 * float(qj @ qk) / (mj * mk)


def semi_penalized_path(j: int, data: Dataset, family: str, gamma: float, grid,
                        tol: Tolerances = TOL) -> np.ndarray:
    """beta_hat_j(lambda) over ``grid`` with warm starts along the path."""
    pf = cd_solver.solve_path(data, family, gamma, grid, proj_col=j, tol=tol)
    x = data.X[:, j]
    partial = data.y[:, None] - data.X @ pf.betas
    return x @ partial / (x @ x)
