import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from spidr.core import InvalidInputError
from spidr.fdr import (correction_factor, estimate_dispersion_A, fdr_curve, fmp, normal_tail,
                       select)

mpmath.mp.dps = 40


def mp_tail(t):
    return mpmath.ncdf(-mpmath.mpf(t))


def mp_factor(t, A):
    t = mpmath.mpf(t)
    phi = mpmath.npdf(t)
    return 1 + 2 * mpmath.mpf(A) * t * phi / (mpmath.sqrt(2) * mpmath.ncdf(-t))


def test_normal_tail_examples():
    assert normal_tail(0.0) == 0.5
    assert float(normal_tail(1.96)) == pytest.approx(0.0249979, abs=5e-8)
    assert float(normal_tail(-1.0)) == pytest.approx(0.8413447, abs=5e-8)
    for t in np.linspace(-8, 8, 321):
        assert abs(float(normal_tail(t)) - float(mp_tail(t))) < 1e-14


def test_correction_factor_oracle():
    # high-precision value of the factor at t=2, A=0.1
    oracle = float(mp_factor(2, 0.1))
    assert oracle == pytest.approx(1.6712467185905, abs=1e-12)
    assert float(correction_factor(2.0, 0.1)) == pytest.approx(oracle, abs=1e-10)
    assert float(mpmath.npdf(2)) == pytest.approx(0.0539910, abs=5e-8)
    assert float(mp_tail(2)) == pytest.approx(0.0227501, abs=5e-8)
    for t in (0.5, 1.0, 3.0, 5.0, 8.0, 12.0):
        for A in (-0.5, 0.1, 1.3):
            assert float(correction_factor(t, A)) == pytest.approx(float(mp_factor(t, A)),
                                                                   rel=1e-12)


def test_curve_examples():
    z = np.array([0.0, 1.0, -2.0, 3.0])
    c = fdr_curve(z, p=1000, A=0.0)
    np.testing.assert_array_equal(c.thresholds, [3.0, 2.0, 1.0, 0.0])
    np.testing.assert_array_equal(c.r_of_t, [1, 2, 3, 4])
    assert c.v_hat[-1] == 1000.0
    np.testing.assert_array_equal(c.q_hat, c.q0_hat)
    assert np.all(np.diff(c.v_hat) >= 0)
    assert np.all(c.q_hat_reported <= 1)
    c2 = fdr_curve(z, p=1000, A=0.3)
    assert np.all(c2.q_hat >= c2.q0_hat)
    with pytest.raises(InvalidInputError):
        fdr_curve([np.inf])


def test_curve_matches_oracle(rng):
    z = rng.standard_normal(200) * 1.5
    c = fdr_curve(z, A=0.2)
    for k in range(0, c.thresholds.size, 17):
        t = c.thresholds[k]
        v = 2 * 200 * mp_tail(t)
        assert c.v_hat[k] == pytest.approx(float(v), rel=1e-10)
        assert c.q_hat[k] == pytest.approx(float(v / c.r_of_t[k] * mp_factor(t, 0.2)), rel=1e-10)
        assert c.r_of_t[k] == np.sum(np.abs(z) >= t)


def test_dispersion_examples():
    m = 20000
    q = stats.norm.ppf((np.arange(m) + 0.5) / m)
    assert abs(estimate_dispersion_A(q)) <= 0.05
    assert estimate_dispersion_A(1.2 * q) == pytest.approx(0.311, abs=0.05)
    A, flag = estimate_dispersion_A(np.full(100, 0.5), return_flag=True)
    assert A == 0.0 and flag
    A, flag = estimate_dispersion_A(np.r_[np.zeros(5), np.full(50, 9.0)], return_flag=True)
    assert A == 0.0 and flag
    assert estimate_dispersion_A(0.3 * q) == pytest.approx((0.09 - 1) / math.sqrt(2), abs=0.01)
    assert estimate_dispersion_A(0.05 * q) >= -1 / math.sqrt(2)
    assert estimate_dispersion_A(q) == estimate_dispersion_A(q[::-1])


def test_select_examples():
    assert select(np.zeros(1000)).selected.size == 0
    s = select(np.zeros(1000))
    assert math.isinf(s.t_hat)
    z = np.zeros(1000)
    z[17] = 10.0
    s = select(z, q=0.15, A=0.0)
    np.testing.assert_array_equal(s.selected, [17])
    q0 = 2 * 1000 * float(mp_tail(np.nextafter(10.0, 0)))
    assert q0 == pytest.approx(1.5e-20, rel=0.05)
    with pytest.raises(InvalidInputError):
        select(z, q=0.0)
    with pytest.raises(InvalidInputError):
        select(z, q=1.0)


def test_select_threshold_and_ci(rng):
    z = np.r_[rng.standard_normal(950), rng.normal(5, 1, 50) * rng.choice([-1, 1], 50)]
    se = rng.uniform(0.5, 2, z.size)
    beta = z * se
    s = select(z, se, beta, q=0.1, A=0.1)
    assert np.isfinite(s.t_hat)
    np.testing.assert_array_equal(s.selected, np.flatnonzero(np.abs(z) >= s.t_hat))
    np.testing.assert_allclose(s.ci_upper - s.ci_lower, 2 * s.t_hat * se[s.selected])
    # duality: every selected interval excludes zero
    assert np.all((s.ci_lower > 0) | (s.ci_upper < 0) | np.isclose(np.abs(z[s.selected]), s.t_hat))
    assert s.q_hat_at_t <= 0.1 + 1e-12
    # conservative rule: every candidate at or above t_hat passes
    c = s.curve
    above = c.thresholds >= s.t_hat
    assert np.all(c.q_hat[above] <= 0.1)


def _q0_only_select(z, q):
    """Independent plain-estimate threshold search over candidate |z| values."""
    az = np.sort(np.abs(z))[::-1]
    p = z.size
    best = None
    for k, t in enumerate(az):
        R = np.sum(np.abs(z) >= t)
        if 2 * p * float(mp_tail(t)) / R <= q:
            best = t
        else:
            break
    return set() if best is None else set(np.flatnonzero(np.abs(z) >= best).tolist())


def test_zero_A_reduces_to_plain_estimate(rng):
    for _ in range(20):
        z = np.r_[rng.standard_normal(180), rng.normal(4, 1, 20)]
        s = select(z, q=0.2, A=0.0)
        assert set(s.selected.tolist()) == _q0_only_select(z, 0.2)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 0.98), st.floats(0.01, 0.98),
       st.floats(-0.7, 2.0))
def test_selection_monotone_in_q(seed, q1, q2, A):
    r = np.random.Generator(np.random.Philox(seed))
    z = np.r_[r.standard_normal(300), r.normal(3.5, 1.5, int(r.integers(0, 40)))]
    lo, hi = sorted((q1, q2))
    a = set(select(z, q=lo, A=A).selected.tolist())
    b = set(select(z, q=hi, A=A).selected.tolist())
    assert a <= b


def test_fmp_examples():
    S = np.arange(18)
    assert fmp(S, S) == (0.0, 0.0)
    e = fmp(np.arange(17), S)
    assert e.fdp == 0.0 and e.fmp == pytest.approx(1 / 18)
    e = fmp(np.r_[np.arange(17), 100, 101, 102], S)
    assert e.fdp == pytest.approx(0.15) and e.fmp == pytest.approx(0.0556, abs=1e-4)
    assert fmp([], S) == (0.0, 1.0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert fmp([1, 2], []) == (1.0, 0.0)
        assert w
