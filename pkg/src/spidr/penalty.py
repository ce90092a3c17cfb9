"""MCP and Lasso penalties and the exact univariate penalized minimizer."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import InvalidInputError

MCP = "mcp"
LASSO = "lasso"
FAMILIES = (MCP, LASSO)
_CODE = {MCP: 0, LASSO: 1}


@dataclass(frozen=True)
class PenaltySpec:
    family: str = MCP
    lam: float = 0.0
    gamma: float = 6.0

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in FAMILIES:
            raise InvalidInputError(f"unknown penalty family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not self.lam >= 0:
            raise InvalidInputError("lambda must be nonnegative")
        if fam == MCP and not self.gamma > 1:
            raise InvalidInputError("MCP needs gamma > 1")

    @property
    def code(self) -> int:
        return _CODE[self.family]

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(self.family, lam, self.gamma)


def penalty_value(t, spec: PenaltySpec):
    """Penalty rho(t; lambda), vectorized over ``t``."""
    a = np.abs(np.asarray(t, dtype=float))
    lam = spec.lam
    if spec.family == LASSO:
        return lam * a
    gl = spec.gamma * lam
    return np.where(a <= gl, lam * a - a * a / (2 * spec.gamma), 0.5 * gl * lam)


def penalty_derivative(t, spec: PenaltySpec):
    """Derivative of the penalty, with the value 0 at ``t == 0``."""
    t = np.asarray(t, dtype=float)
    lam = spec.lam
    if spec.family == LASSO:
        return lam * np.sign(t)
    if lam == 0:
        return np.zeros_like(t)
    return lam * np.maximum(1 - np.abs(t) / (spec.gamma * lam), 0.0) * np.sign(t)


@numba.njit(cache=True, nogil=True)
def _pen(b, lam, gamma, family):
    a = abs(b)
    if family == 1:
        return lam * a
    if a <= gamma * lam:
        return lam * a - a * a / (2.0 * gamma)
    return 0.5 * gamma * lam * lam


@numba.njit(cache=True, nogil=True)
def _soft(z, lam):
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


@numba.njit(cache=True, nogil=True)
def _uni_obj(b, z, d, lam, gamma, family):
    return 0.5 * d * b * b - z * b + _pen(b, lam, gamma, family)


@numba.njit(cache=True, nogil=True)
def _univariate(z, d, lam, gamma, family):
    if family == 1:
        return _soft(z, lam) / d
    if d * gamma > 1.0:
        if abs(z) <= d * gamma * lam:
            return _soft(z, lam) / (d - 1.0 / gamma)
        return z / d
    # nonconvex univariate problem: the minimizer is 0, the kink at
    # sgn(z)*gamma*lam, or the unpenalized point z/d when it lies beyond it
    best = 0.0
    best_obj = 0.0
    s = 1.0 if z >= 0 else -1.0
    cand = s * gamma * lam
    f = _uni_obj(cand, z, d, lam, gamma, family)
    if f < best_obj:
        best, best_obj = cand, f
    cand = z / d
    if abs(cand) > gamma * lam:
        f = _uni_obj(cand, z, d, lam, gamma, family)
        if f < best_obj:
            best, best_obj = cand, f
    return best


def univariate_minimizer(z: float, d: float, spec: PenaltySpec) -> float:
    """Global minimizer of ``d*b**2/2 - z*b + rho(b)`` over real ``b``."""
    if not d > 0:
        raise InvalidInputError("curvature d must be positive")
    return float(_univariate(float(z), float(d), spec.lam, spec.gamma, spec.code))
