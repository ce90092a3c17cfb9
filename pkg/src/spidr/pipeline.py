"""End-to-end fit: CV-tuned penalized fit, semi-penalized estimates,
variance, z-statistics and FDR-controlled selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cd_solver, fdr
from .core import TOL, Dataset, Tolerances
from .penalty import MCP, PenaltySpec
from .semipenalized import Sigma2Result, SpidrFit, attach_inference, estimate_sigma2, fit_all


@dataclass
class SpidrResult:
    fit: SpidrFit
    cv: cd_solver.CvResult
    grid: cd_solver.LambdaGrid
    sigma2: Sigma2Result
    A: float
    A_flag: bool
    selection: fdr.SelectionResult
    warnings: list = field(default_factory=list)

    @property
    def penalized_beta(self) -> np.ndarray:
        """Fully penalized coefficients at the CV-selected lambda."""
        return self.cv.path.betas[:, self.cv.index]


def run_spidr(data: Dataset, q: float = 0.15, gamma: float = 6.0, family: str = MCP,
              n_folds: int = 5, n_lambda: int = 100, min_ratio: float = None,
              seed: int = 0, sigma2: float = None, A: float = None, n_repeats: int = 10,
              denominator: str = "augmented", n_jobs: int = 1, cv: cd_solver.CvResult = None,
              grid: cd_solver.LambdaGrid = None, tol: Tolerances = TOL) -> SpidrResult:
    """Run the whole procedure on standardized ``data``.

    ``sigma2`` and ``A`` override the estimated error variance and
    dispersion. A precomputed ``cv`` (with its full-data path) may be
    passed to avoid refitting.
    """
    warn = []
    if grid is None:
        grid = cd_solver.make_grid(data, n_lambda, min_ratio)
    if cv is None:
        cv = cd_solver.cross_validate(data, family, gamma, grid, n_folds, seed, tol=tol)
    if not cv.path.converged.all():
        warn.append(f"penalized path: {int((~cv.path.converged).sum())} lambdas not converged")
    b_full = cv.path.betas[:, cv.index]
    spec = PenaltySpec(family, cv.lambda_hat, gamma)
    fit = fit_all(data, spec, warm_start=b_full, n_jobs=n_jobs, tol=tol)
    if not fit.converged.all():
        bad = np.flatnonzero(~fit.converged) + 1
        warn.append(f"semi-penalized fits not converged for columns {bad.tolist()}")
    if sigma2 is None:
        s2 = estimate_sigma2(data, family, gamma, grid, n_repeats, seed,
                             support=np.flatnonzero(b_full), coef=b_full,
                             denominator=denominator, tol=tol)
        if s2.truncated:
            warn.append("variance refit support truncated to fit half the sample")
    else:
        s2 = Sigma2Result(float(sigma2), np.array([sigma2]), np.zeros(0, dtype=np.intp),
                          False, "override")
    fit = attach_inference(fit, data, s2.value, tol)
    if fit.collinear.any():
        bad = np.flatnonzero(fit.collinear) + 1
        warn.append(f"collinear columns excluded from inference: {bad.tolist()}")
    if A is None:
        A_val, A_flag = fdr.estimate_dispersion_A(fit.z[fit.usable], return_flag=True)
        if A_flag:
            warn.append("too few central z-values to estimate dispersion; A set to 0")
    else:
        A_val, A_flag = float(A), False
    sel = fdr.select(fit.z, fit.se, fit.beta_hat, p=data.p, q=q, A=A_val)
    return SpidrResult(fit, cv, grid, s2, A_val, A_flag, sel, warn)
