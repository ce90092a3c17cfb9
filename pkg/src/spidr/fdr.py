"""Direct FDR estimation on z-statistics, threshold search and
FDR-adjusted confidence intervals."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize, special

from .core import InvalidInputError

_SQRT2 = math.sqrt(2.0)
_TAIL_CLAMP = (-1 / _SQRT2, 2.0)
_CENTRAL = 2.0


def normal_tail(t):
    """Upper tail probability ``P(Z > t)`` of the standard normal."""
    return special.ndtr(-np.asarray(t, dtype=float))


def _phi_over_tail(t):
    # phi(t) / Phi(-t) without underflow, via the scaled complementary erf
    t = np.asarray(t, dtype=float)
    return 2.0 / (math.sqrt(2 * math.pi) * special.erfcx(t / _SQRT2))


def correction_factor(t, A: float):
    """Correlation correction ``1 + 2A t phi(t) / (sqrt(2) Phi(-t))``."""
    t = np.asarray(t, dtype=float)
    return 1.0 + 2.0 * A * t * _phi_over_tail(t) / _SQRT2


def _q_hat(t, R, p, A):
    t = np.asarray(t, dtype=float)
    R = np.asarray(R, dtype=float)
    v = 2.0 * p * normal_tail(np.abs(t))
    q0 = np.where(R > 0, v / np.maximum(R, 1), 0.0)
    return v, q0, q0 * correction_factor(t, A)


@dataclass
class FdrCurve:
    """FDR estimates at every distinct ``|z|`` value (largest first).

    ``r_of_t[k]`` counts statistics strictly above a point half an ulp
    below ``thresholds[k]``, i.e. ``#{|z| >= thresholds[k]}``.
    """

    thresholds: np.ndarray
    r_of_t: np.ndarray
    v_hat: np.ndarray
    q0_hat: np.ndarray
    q_hat: np.ndarray
    dispersion_A: float
    p: int

    @property
    def q_hat_reported(self) -> np.ndarray:
        return np.clip(self.q_hat, 0.0, 1.0)


@dataclass
class SelectionResult:
    q: float
    t_hat: float
    selected: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    q_hat_at_t: float
    dispersion_A: float
    curve: FdrCurve = None


class SelectionError(NamedTuple):
    fdp: float
    fmp: float


def _count_ge(sorted_abs, t):
    return sorted_abs.size - np.searchsorted(sorted_abs, t, side="left")


def fdr_curve(z, p: int = None, A: float = 0.0) -> FdrCurve:
    """Estimated FDR (plain and correlation-corrected) over candidate thresholds."""
    az = np.abs(np.asarray(z, dtype=float))
    if not np.all(np.isfinite(az)):
        raise InvalidInputError("z-statistics must be finite")
    p = az.size if p is None else int(p)
    ascending = np.sort(az)
    thresholds = np.unique(az)[::-1]
    R = _count_ge(ascending, thresholds)
    v, q0, q = _q_hat(thresholds, R, p, A)
    return FdrCurve(thresholds, R, v, q0, q, float(A), p)


def _truncated_iqr(sigma, c=_CENTRAL):
    lo = special.ndtr(-c / sigma)
    mass = 1.0 - 2.0 * lo
    u = sigma * special.ndtri(lo + 0.75 * mass)
    return 2.0 * u


def estimate_dispersion_A(z, return_flag: bool = False):
    """Dispersion variable from the spread of the central z-values.

    The null spread ``s0`` is the scale of a centered normal whose
    restriction to ``[-2, 2]`` has the same interquartile range as the
    observed z-values in that window; ``A = (s0**2 - 1) / sqrt(2)``,
    clamped to ``[-1/sqrt(2), 2]``. Fewer than 10 central values, or a
    degenerate spread, gives ``A = 0`` with the flag set.
    """
    z = np.asarray(z, dtype=float)
    central = z[np.abs(z) <= _CENTRAL]
    flag = False
    A = 0.0
    if central.size < 10:
        flag = True
    else:
        q25, q75 = np.quantile(central, [0.25, 0.75])
        iqr = q75 - q25
        if not iqr > 0:
            flag = True
        elif iqr >= _truncated_iqr(1e4):
            A = _TAIL_CLAMP[1]
        else:
            g = lambda ls: _truncated_iqr(math.exp(ls)) - iqr
            s0 = math.exp(optimize.brentq(g, math.log(1e-4), math.log(1e4), xtol=1e-14))
            A = float(np.clip((s0 * s0 - 1.0) / _SQRT2, *_TAIL_CLAMP))
    if return_flag:
        return A, flag
    return A


def _refine(lo, hi, R, p, A, q, n_grid=64):
    """Smallest t in (lo, hi] with Q_hat(t') <= q for all t' in [t, hi]."""
    grid = np.linspace(lo, hi, n_grid + 1)[1:]
    _, _, qh = _q_hat(grid, np.full(grid.size, R), p, A)
    ok = qh <= q
    i = grid.size - 1
    while i > 0 and ok[i - 1]:
        i -= 1
    if i == 0:
        _, _, q_lo = _q_hat(lo, R, p, A)
        if q_lo <= q:
            return float(np.nextafter(lo, np.inf)) if lo > 0 else 0.0
        a = lo
    else:
        a = grid[i - 1]
    b = grid[i]
    f = lambda t: float(_q_hat(t, R, p, A)[2]) - q
    if f(a) <= 0:
        return float(b)
    root = optimize.brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    # keep the returned threshold on the passing side of the crossing
    while f(root) > 0 and root < b:
        root = float(np.nextafter(root, np.inf))
    return float(root)


def select(z, se=None, beta_hat=None, p: int = None, q: float = 0.15, A: float = 0.0,
           keep_curve: bool = True) -> SelectionResult:
    """Threshold ``|z|`` so that the estimated FDR is at most ``q``.

    Since the corrected estimate need not be monotone, the threshold is the
    infimum of the region where every larger candidate also passes. When no
    candidate passes the selection is empty and ``t_hat`` is ``inf``.
    Confidence intervals ``beta_hat_j +- t_hat * se_j`` are returned for the
    selected indices when ``se`` and ``beta_hat`` are given.
    """
    if not 0 < q < 1:
        raise InvalidInputError("q must lie in (0, 1)")
    z = np.asarray(z, dtype=float)
    curve = fdr_curve(z, p, A)
    p = curve.p
    passing = curve.q_hat <= q
    m = int(np.argmin(passing)) if not passing.all() else passing.size
    az = np.abs(z)
    if m == 0:
        t_hat = math.inf
        selected = np.zeros(0, dtype=np.intp)
        q_at = 0.0
    else:
        hi = curve.thresholds[m - 1]
        lo = curve.thresholds[m] if m < curve.thresholds.size else 0.0
        R = int(curve.r_of_t[m - 1])
        t_hat = _refine(lo, hi, R, p, A, q) if hi > 0 else 0.0
        selected = np.flatnonzero(az >= t_hat)
        q_at = float(_q_hat(t_hat, R, p, A)[2])
    if se is not None and beta_hat is not None and selected.size:
        b = np.asarray(beta_hat, dtype=float)[selected]
        s = np.asarray(se, dtype=float)[selected]
        lower, upper = b - t_hat * s, b + t_hat * s
    else:
        lower = upper = np.zeros(0)
    return SelectionResult(q, t_hat, selected, lower, upper, q_at, float(A),
                           curve if keep_curve else None)


def fmp(selected, true_support) -> SelectionError:
    """False discovery and false miss proportions of a selection."""
    sel = set(int(i) for i in np.asarray(selected).ravel())
    truth = set(int(i) for i in np.asarray(true_support).ravel())
    fdp = len(sel - truth) / len(sel) if sel else 0.0
    if not truth:
        warnings.warn("empty true support: false miss proportion set to 0")
        return SelectionError(fdp, 0.0)
    return SelectionError(fdp, (len(truth) - len(truth & sel)) / len(truth))
