"""Acceptance criteria, one test each, at their stated tolerances.

The terminal summary prints one PASS/FAIL line per criterion together with
the measured quantities.
"""

import os
import time

import mpmath
import numpy as np
import pytest

from spidr import cd_solver
from spidr.core import Dataset, standardize
from spidr.fdr import correction_factor, fdr_curve, normal_tail, select
from spidr.oracle import ideal_fit
from spidr.penalty import LASSO, MCP, PenaltySpec
from spidr.semipenalized import (alternative_expression_check, estimate_sigma2, fit_all,
                                 semi_penalized_path)
from spidr.sim import generate, make_design, rep_seed, run_replications

pytestmark = pytest.mark.slow

mpmath.mp.dps = 40
JOBS = os.cpu_count() or 1
SIM_SEED = 20240601


def _table_run(name, record, key):
    t0 = time.perf_counter()
    s = run_replications(make_design(name), 20, q=0.15, seed=SIM_SEED, n_jobs=JOBS)
    m = s.means
    for meth in ("spidr", "mcp", "lasso"):
        record(key, f"{meth:5s}: NVS={m[meth]['NVS']:.2f} FDR={m[meth]['FDR']:.3f} "
                    f"FMR={m[meth]['FMR']:.3f}")
    record(key, f"failed reps={len(s.failures)}  runtime={time.perf_counter() - t0:.0f}s")
    assert not s.failures
    return m


def test_criterion_01(record):
    """Example 1, 20 reps: SPIDR FDR in [0.09, 0.19], FMR <= 0.10, NVS in [17, 24]."""
    m = _table_run("Example1", record, 1)["spidr"]
    checks = {"FDR": 0.09 <= m["FDR"] <= 0.19, "FMR": m["FMR"] <= 0.10,
              "NVS": 17 <= m["NVS"] <= 24}
    record(1, "checks: " + ", ".join(f"{k}={'ok' if v else 'out of band'}"
                                     for k, v in checks.items()))
    assert all(checks.values())


def test_criterion_02(record):
    """Example 2, 20 reps: SPIDR FDR in [0.08, 0.22], FMR <= 0.10, FMR below MCP and Lasso."""
    m = _table_run("Example2", record, 2)
    s = m["spidr"]
    checks = {"FDR": 0.08 <= s["FDR"] <= 0.22, "FMR": s["FMR"] <= 0.10,
              "FMR<MCP": s["FMR"] < m["mcp"]["FMR"], "FMR<Lasso": s["FMR"] < m["lasso"]["FMR"]}
    record(2, "checks: " + ", ".join(f"{k}={'ok' if v else 'fails'}" for k, v in checks.items()))
    assert all(checks.values())


def test_criterion_03(record):
    """Example 3, 20 reps: SPIDR FDR in [0.05, 0.18], FMR in [0.05, 0.20]."""
    s = _table_run("Example3", record, 3)["spidr"]
    checks = {"FDR": 0.05 <= s["FDR"] <= 0.18, "FMR": 0.05 <= s["FMR"] <= 0.20}
    record(3, "checks: " + ", ".join(f"{k}={'ok' if v else 'out of band'}"
                                     for k, v in checks.items()))
    assert all(checks.values())


def test_criterion_04(record):
    """Ideal-estimator equivalence on convex strong-signal instances in >= 90% of 50 seeds."""
    t0 = time.perf_counter()
    n, p, k, gamma, lam = 200, 50, 5, 6.0, 0.3
    hits = 0
    min_eig = np.inf
    for s in range(50):
        r = np.random.Generator(np.random.Philox(rep_seed(404, s)))
        X = r.standard_normal((n, p))
        beta = np.zeros(p)
        beta[:k] = 7.0 * r.choice([-1.0, 1.0], k)
        d = standardize(Dataset(X @ beta + r.standard_normal(n), X))
        b_std = beta * d.x_scale
        assert np.abs(b_std[:k]).min() >= 3 * gamma * lam
        min_eig = min(min_eig, np.linalg.eigvalsh(d.X.T @ d.X / n)[0])
        fit = fit_all(d, PenaltySpec(MCP, lam, gamma))
        ideal = ideal_fit(d, np.arange(k))
        hits += bool(np.all(np.abs(fit.beta_hat - ideal.beta_tilde) <= 1e-8))
    elapsed = time.perf_counter() - t0
    frac = hits / 50
    record(4, f"agreement fraction={frac:.2f}  smallest Gram eigenvalue={min_eig:.3f} "
              f"(> 1/gamma={1 / gamma:.3f})  runtime={elapsed:.1f}s")
    assert min_eig > 1 / gamma
    assert frac >= 0.9
    assert elapsed < 120


def test_criterion_05(record):
    """KKT-based closed form reproduces beta_hat_j to 1e-6 on >= 1000 (instance, j) pairs."""
    t0 = time.perf_counter()
    r = np.random.Generator(np.random.Philox(505))
    worst, pairs, skipped = 0.0, 0, 0
    for inst in range(24):
        n, p = (60, 50) if inst % 2 else (80, 40)
        X = r.standard_normal((n, p)) + 0.4 * r.standard_normal((n, 1))
        beta = np.zeros(p)
        beta[:4] = r.choice([-2.0, -1.0, 1.0, 2.0], 4)
        d = standardize(Dataset(X @ beta + r.standard_normal(n), X))
        lam = cd_solver.lambda_max(d) * r.uniform(0.1, 0.6)
        fam = MCP if inst % 3 else LASSO
        spec = PenaltySpec(fam, lam, r.uniform(2.0, 8.0))
        fit = fit_all(d, spec)
        for j in range(p):
            if not fit.converged[j]:
                continue
            v = alternative_expression_check(j, fit, d)
            if v is None:
                skipped += 1
                continue
            worst = max(worst, v)
            pairs += 1
    elapsed = time.perf_counter() - t0
    record(5, f"pairs={pairs} skipped={skipped} max deviation={worst:.2e} "
              f"runtime={elapsed:.1f}s")
    assert pairs >= 1000
    assert worst < 1e-6
    assert elapsed < 60


def test_criterion_06(record):
    """Split-refit sigma2 on Example 1 (sigma=3), 50 seeds: median rel. error <= 15%, >= 90% within 25%."""
    t0 = time.perf_counter()
    design = make_design("Example1")
    rel = []
    for s in range(50):
        gen_ss, cv_ss = rep_seed(606, s).spawn(2)
        d = standardize(generate(design, gen_ss).data)
        seed = int(cv_ss.generate_state(1)[0])
        grid = cd_solver.make_grid(d)
        cv = cd_solver.cross_validate(d, MCP, 6.0, grid, 5, seed)
        b = cv.path.betas[:, cv.index]
        est = estimate_sigma2(d, MCP, 6.0, grid, seed=seed, support=np.flatnonzero(b), coef=b)
        rel.append(abs(est.value - 9.0) / 9.0)
    rel = np.array(rel)
    med, within = float(np.median(rel)), float(np.mean(rel <= 0.25))
    elapsed = time.perf_counter() - t0
    record(6, f"median relative error={med:.3f}  fraction within 25%={within:.2f}  "
              f"runtime={elapsed:.0f}s")
    assert med <= 0.15
    assert within >= 0.9
    assert elapsed < 300


def test_criterion_07(record):
    """Solver: KKT certificates on 100 instances, MCP(gamma=1e6) path equals Lasso path, monotone objective."""
    r = np.random.Generator(np.random.Philox(707))
    worst_kkt, monotone = 0.0, True
    for inst in range(100):
        n, p = int(r.integers(30, 120)), int(r.integers(10, 200))
        X = r.standard_normal((n, p))
        if inst % 2:
            X += r.uniform(0.2, 1.0) * r.standard_normal((n, 1))
        beta = np.zeros(p)
        beta[: min(5, p)] = r.normal(0, 2, min(5, p))
        d = standardize(Dataset(X @ beta + r.standard_normal(n), X))
        fam = MCP if inst % 4 else LASSO
        spec = PenaltySpec(fam, cd_solver.lambda_max(d) * r.uniform(0.05, 0.9),
                           r.uniform(1.5, 10.0))
        res = cd_solver.solve_at_lambda(d, spec, track_objective=True)
        worst_kkt = max(worst_kkt, cd_solver.kkt_violation(d, res.beta, spec))
        h = res.history
        monotone &= bool(np.all(np.diff(h) <= 1e-12 * np.maximum(1.0, np.abs(h[:-1]))))
    # documented instance family for the large-gamma comparison: n=100, p=200
    gap = 0.0
    for inst in range(5):
        X = r.standard_normal((100, 200))
        X = np.sqrt(0.7) * X + np.sqrt(0.3) * r.standard_normal((100, 1))
        beta = np.zeros(200)
        beta[:3] = 2.0
        d = standardize(Dataset(X @ beta + r.standard_normal(100), X))
        g = cd_solver.make_grid(d, 50)
        a = cd_solver.solve_path(d, MCP, 1e6, g)
        b = cd_solver.solve_path(d, LASSO, 1e6, g)
        gap = max(gap, float(np.abs(a.betas - b.betas).max()))
    record(7, f"max KKT violation={worst_kkt:.2e}  objective monotone={monotone}  "
              f"max |MCP(1e6) - Lasso| on paths={gap:.2e}")
    assert worst_kkt <= 1e-6
    assert monotone
    assert gap <= 1e-5


def test_criterion_08(record):
    """FDR machinery: A=0 reduction, tail and factor values vs high-precision oracle, monotone in q."""
    worst = 0.0
    for t in np.linspace(0.0, 10.0, 201):
        worst = max(worst, abs(float(normal_tail(t)) - float(mpmath.ncdf(-mpmath.mpf(t)))))
        for A in (-0.5, 0.0, 0.1, 0.8):
            mt = mpmath.mpf(t)
            ref = 1 + 2 * A * mt * mpmath.npdf(mt) / (mpmath.sqrt(2) * mpmath.ncdf(-mt))
            worst = max(worst, abs(float(correction_factor(t, A)) - float(ref)) / float(ref))
    mt = mpmath.mpf(2)
    ref2 = float(1 + mpmath.mpf("0.2") * mt * mpmath.npdf(mt) / (mpmath.sqrt(2) * mpmath.ncdf(-mt)))
    f2 = float(correction_factor(2.0, 0.1))
    r = np.random.Generator(np.random.Philox(808))
    reduction = True
    mono = True
    for _ in range(100):
        z = np.r_[r.standard_normal(400), r.normal(3.5, 1.5, int(r.integers(0, 60)))]
        c = fdr_curve(z, A=0.0)
        reduction &= bool(np.array_equal(c.q_hat, c.q0_hat))
        v_ref = np.array([2 * z.size * float(mpmath.ncdf(-mpmath.mpf(t))) for t in c.thresholds[:5]])
        worst = max(worst, float(np.max(np.abs(c.v_hat[:5] - v_ref) / v_ref)))
        A = r.uniform(-0.5, 1.0)
        prev = set()
        for q in (0.01, 0.05, 0.1, 0.15, 0.25, 0.5):
            cur = set(select(z, q=q, A=A).selected.tolist())
            mono &= prev <= cur
            prev = cur
    record(8, f"max error vs oracle={worst:.1e}  factor(t=2, A=0.1)={f2:.10f} "
              f"(oracle {ref2:.10f}; quoted 1.67119 is off by {abs(ref2 - 1.67119):.1e})")
    record(8, f"A=0 reduction exact={reduction}  monotone in q on 100 vectors={mono}")
    assert abs(f2 - ref2) <= 1e-10
    assert worst <= 1e-10
    assert reduction and mono


def _mean_corr(X, a, b):
    C = np.corrcoef(X[:, np.r_[a, b]], rowvar=False)
    na = len(a)
    if a is b:
        return C[:na, :na][np.triu_indices(na, 1)].mean()
    return C[:na, na:].mean()


def test_criterion_09(record):
    """Generator block correlations 0.5 / 0.32 / 0.8 and AR lag-1 0.5 within 0.02 at n=1e4."""
    e1 = generate(make_design("Example1", n=10_000), 909)
    b = e1.blocks
    c11 = _mean_corr(e1.data.X, b["A1"], b["A1"])
    c13 = _mean_corr(e1.data.X, b["A1"], b["A3"])
    e2 = generate(make_design("Example2", n=10_000), 909)
    c2 = _mean_corr(e2.data.X, e2.blocks["A1"], e2.blocks["A1"])
    X3 = generate(make_design("Example3", n=10_000), 909).data.X
    lag1 = np.mean([np.corrcoef(X3[:, j], X3[:, j + 1])[0, 1] for j in range(X3.shape[1] - 1)])
    record(9, f"Example1 within A1={c11:.4f} A1-A3={c13:.4f}  Example2 within A1={c2:.4f}  "
              f"Example3 lag-1={lag1:.4f}")
    assert abs(c11 - 0.5) <= 0.02
    assert abs(c13 - 0.32) <= 0.02
    assert abs(c2 - 0.8) <= 0.02
    assert abs(lag1 - 0.5) <= 0.02


def test_criterion_10(record):
    """PathDemo: semi-penalized path range <= MCP path range for each large coefficient in >= 80% of 20 seeds."""
    design = make_design("PathDemo")
    wins = np.zeros(3)
    for s in range(20):
        d = standardize(generate(design, rep_seed(1010, s)).data)
        g = cd_solver.make_grid(d)
        mcp = cd_solver.solve_path(d, MCP, 6.0, g)
        for j in range(3):
            sp = semi_penalized_path(j, d, MCP, 6.0, g)
            wins[j] += np.ptp(sp) <= np.ptp(mcp.betas[j])
    frac = wins / 20
    record(10, "pass fraction by coefficient: " +
           ", ".join(f"j={j + 1}: {f:.2f}" for j, f in enumerate(frac)))
    assert np.all(frac >= 0.8)
