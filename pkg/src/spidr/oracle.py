"""Ideal least-squares estimator that knows the true support, plus the
signal-strength and stickiness diagnostics built on it.

Everything here needs the true coefficients, so it only makes sense on
simulated data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TOL, Dataset, InvalidInputError, as_index_set, project_out_set


@dataclass
class IdealFit:
    beta_tilde: np.ndarray
    m: np.ndarray
    defined: np.ndarray
    support: np.ndarray
    resid_cols: np.ndarray  # column j holds Q_{S_j} x_j

    def var(self, j: int, sigma2: float) -> float:
        return sigma2 / self.m[j] ** 2

    def cov(self, j: int, k: int, sigma2: float) -> float:
        qj, qk = self.resid_cols[:, j], self.resid_cols[:, k]
        return sigma2 * float(qj @ qk) / (self.m[j] ** 2 * self.m[k] ** 2)

    def corr(self, j: int, k: int) -> float:
        """Correlation of the ideal estimates of coefficients j and k."""
        qj, qk = self.resid_cols[:, j], self.resid_cols[:, k]
        return float(qj @ qk) / (self.m[j] * self.m[k])


def _companion(support, j):
    return support[support != j]


def ideal_fit(data: Dataset, true_support, tol=TOL) -> IdealFit:
    """Least squares of y on ``{j} U S_j`` for each j, keeping j's coefficient."""
    S = as_index_set(true_support, data.p)
    n, p = data.n, data.p
    beta = np.full(p, np.nan)
    m = np.zeros(p)
    defined = np.zeros(p, dtype=bool)
    resid = np.zeros((n, p))
    for j in range(p):
        Sj = _companion(S, j)
        if Sj.size + 1 >= n:
            raise InvalidInputError("true support too large for the sample size")
        x = data.X[:, j]
        qx = project_out_set(x, Sj, data, tol)
        m2 = float(x @ qx)
        resid[:, j] = qx
        if m2 <= tol.collinear_rel * n:
            continue
        m[j] = np.sqrt(m2)
        defined[j] = True
        beta[j] = float(qx @ data.y) / m2
    return IdealFit(beta, m, defined, S, resid)


def signal_strength(data: Dataset, true_support, beta, sigma: float, fit: IdealFit = None):
    """Return ``(psi, base_signal, multiplier)`` with ``psi = m_j * beta_j / sigma``."""
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    fit = ideal_fit(data, true_support) if fit is None else fit
    base = np.asarray(beta, dtype=float) / sigma
    return fit.m * base, base, fit.m.copy()


def stickiness(j: int, k: int, data: Dataset, true_support, beta, sigma: float,
               fit: IdealFit = None):
    """Root mean squared difference of the ideal z-scores of j and k.

    Returns ``(s_jk, residual_correlation)``.
    """
    fit = ideal_fit(data, true_support) if fit is None else fit
    if not (fit.defined[j] and fit.defined[k]):
        raise InvalidInputError("stickiness undefined for a zero signal multiplier")
    psi, _, _ = signal_strength(data, true_support, beta, sigma, fit)
    rc = 1.0 if j == k else fit.corr(j, k)
    s2 = (psi[j] - psi[k]) ** 2 + 2.0 * (1.0 - rc)
    return float(np.sqrt(max(s2, 0.0))), rc
