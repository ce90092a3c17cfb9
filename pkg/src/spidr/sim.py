"""Seeded simulation designs and the replication engine."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import cd_solver, fdr
from .core import Dataset, InvalidInputError, standardize
from .oracle import ideal_fit
from .penalty import LASSO, MCP
from .pipeline import run_spidr

DESIGNS = ("PathDemo", "Example1", "Example2", "Example3")
METHODS = ("lasso", "mcp", "spidr")

_EX_BETA = (1, 1, 1, .8, .8, .8, .6, .6, .6, -.6, -.6, -.6, -.8, -.8, -.8, -1, -1, -1)
_DEMO_BETA = (3, 2, 1, -0.5, -1.0, -1.5)


@dataclass(frozen=True)
class SimDesign:
    name: str
    n: int
    p: int
    beta_nonzero: tuple
    sigma: float
    a: float = None
    a1: float = None
    a2: float = None
    a3: float = None
    rho: float = None
    block_size: int = 50
    random_support: bool = False

    def beta(self, support=None) -> np.ndarray:
        b = np.zeros(self.p)
        idx = np.arange(len(self.beta_nonzero)) if support is None else support
        b[idx] = self.beta_nonzero
        return b


def make_design(name: str, **overrides) -> SimDesign:
    """Parameters of a named design, optionally overridden (e.g. ``p=200``)."""
    if name == "PathDemo":
        d = SimDesign(name, n=100, p=1000, beta_nonzero=_DEMO_BETA, sigma=2.5,
                      a=math.sqrt(1 / 3))
    elif name in ("Example1", "Example2"):
        d = SimDesign(name, n=162, p=1000, beta_nonzero=_EX_BETA, sigma=3.0,
                      a1=1.0 if name == "Example1" else 2.0, a2=0.5, a3=0.1)
    elif name == "Example3":
        d = SimDesign(name, n=162, p=1000, beta_nonzero=_EX_BETA, sigma=3.0, rho=0.5)
    else:
        raise InvalidInputError(f"unknown design {name!r}; valid: {', '.join(DESIGNS)}")
    return replace(d, **overrides)


@dataclass
class SimData:
    data: Dataset
    beta: np.ndarray
    support: np.ndarray
    blocks: dict


def rep_seed(seed: int, rep: int) -> np.random.SeedSequence:
    """Independent substream for replication ``rep``."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep),))


def _rng(seed):
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def generate(design: SimDesign, seed) -> SimData:
    """Draw one dataset (raw scale) with its true coefficients."""
    rng = _rng(seed)
    n, p = design.n, design.p
    k = len(design.beta_nonzero)
    if design.name == "PathDemo":
        z = rng.standard_normal((n, p))
        u = rng.standard_normal((n, 2))
        X = z.copy()
        a = design.a
        X[:, 0:4] += a * u[:, [0]]
        X[:, 4:8] += a * u[:, [1]]
        X[:, 8:17] += u[:, [0]]
        X[:, 17:26] += u[:, [1]]
        support = np.arange(k)
        blocks = {"a_u1": np.arange(0, 4), "a_u2": np.arange(4, 8),
                  "u1": np.arange(8, 17), "u2": np.arange(17, 26)}
    elif design.name in ("Example1", "Example2"):
        z = rng.standard_normal((n, p))
        u = rng.standard_normal((n, 2))
        if design.random_support:
            support = np.sort(rng.choice(p, size=k, replace=False))
        else:
            support = np.arange(k)
        rest = np.setdiff1d(np.arange(p), support)
        picked = rng.choice(rest, size=3 * design.block_size, replace=False)
        half = k // 2
        bs = design.block_size
        blocks = {"A1": support[:half], "A2": support[half:],
                  "A3": np.sort(picked[:bs]), "A4": np.sort(picked[bs:2 * bs]),
                  "A5": np.sort(picked[2 * bs:])}
        X = z.copy()
        X[:, blocks["A1"]] += design.a1 * u[:, [0]]
        X[:, blocks["A2"]] += design.a1 * u[:, [1]]
        X[:, blocks["A3"]] += design.a2 * u[:, [0]]
        X[:, blocks["A4"]] += design.a2 * u[:, [1]]
        X[:, blocks["A5"]] += design.a3 * (u[:, [0]] - u[:, [1]])
    elif design.name == "Example3":
        z = rng.standard_normal((n, p))
        rho = design.rho
        X = np.empty((n, p))
        X[:, 0] = z[:, 0]
        s = math.sqrt(1 - rho * rho)
        for j in range(1, p):
            X[:, j] = rho * X[:, j - 1] + s * z[:, j]
        support = np.sort(rng.choice(p, size=k, replace=False)) if design.random_support \
            else np.arange(k)
        blocks = {}
    else:
        raise InvalidInputError(f"unknown design {design.name!r}")
    beta = design.beta(support)
    eps = rng.standard_normal(n) * design.sigma
    y = X @ beta + eps
    return SimData(Dataset(y, X), beta, support, blocks)


def _finite(x):
    return x if math.isfinite(x) else None


@dataclass
class RepSummary:
    design: str
    n_reps: int
    q: float
    methods: tuple
    records: list
    means: dict
    sds: dict
    selection_freq: dict
    truth: np.ndarray
    failures: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "design": self.design,
            "n_reps": self.n_reps,
            "n_failed": len(self.failures),
            "q": self.q,
            "methods": {
                m: {key: {"mean": _finite(self.means[m][key]), "sd": _finite(self.sds[m][key])}
                    for key in ("NVS", "FDR", "FMR")}
                for m in self.methods
            },
            "spidr_ideal_agreement": self.ideal_agreement(),
            "failures": self.failures,
        }

    def ideal_agreement(self):
        vals = [r["ideal_agree"] for r in self.records
                if r["method"] == "spidr" and r["ideal_agree"] is not None]
        return math.fsum(vals) / len(vals) if vals else None


REP_COLUMNS = ("rep", "method", "nvs", "fdp", "fmp", "lambda_hat", "t_hat", "sigma2_hat", "A",
               "ideal_agree")
AGREE_TOL = 1e-8


def _ideal_agreement(fit, data, support):
    """Fraction of coefficients where SPIDR equals the ideal estimate."""
    ideal = ideal_fit(data, support)
    ok = ideal.defined & ~fit.excluded
    if not ok.any():
        return None
    diff = np.abs(fit.beta_hat[ok] - ideal.beta_tilde[ok])
    return float(np.mean(diff <= AGREE_TOL))


def _one_rep(args):
    design, rep, seed, q, methods, gamma, n_folds, n_lambda = args
    ss = rep_seed(seed, rep)
    gen_ss, cv_ss, var_ss = ss.spawn(3)
    try:
        sd = generate(design, gen_ss)
        data = standardize(sd.data)
        cv_seed = int(cv_ss.generate_state(1)[0])
        var_seed = int(var_ss.generate_state(1)[0])
        grid = cd_solver.make_grid(data, n_lambda)
        out = []
        mcp_cv = None
        if "mcp" in methods or "spidr" in methods:
            mcp_cv = cd_solver.cross_validate(data, MCP, gamma, grid, n_folds, cv_seed)
        for m in methods:
            row = dict(rep=rep, method=m, lambda_hat=None, t_hat=None, sigma2_hat=None, A=None,
                       ideal_agree=None)
            if m == "spidr":
                res = run_spidr(data, q=q, gamma=gamma, n_folds=n_folds, seed=var_seed,
                                cv=mcp_cv, grid=grid)
                sel = res.selection.selected
                row.update(lambda_hat=res.cv.lambda_hat,
                           t_hat=None if math.isinf(res.selection.t_hat) else res.selection.t_hat,
                           sigma2_hat=res.sigma2.value, A=res.A,
                           ideal_agree=_ideal_agreement(res.fit, data, sd.support))
            else:
                cv = mcp_cv if m == "mcp" else cd_solver.cross_validate(
                    data, LASSO, gamma, grid, n_folds, cv_seed)
                sel = np.flatnonzero(cv.path.betas[:, cv.index])
                row["lambda_hat"] = cv.lambda_hat
            err = fdr.fmp(sel, sd.support)
            # independent set arithmetic cross-check
            tp = np.intersect1d(sel, sd.support).size
            naive_fdp = (sel.size - tp) / sel.size if sel.size else 0.0
            naive_fmp = (sd.support.size - tp) / sd.support.size
            if abs(naive_fdp - err.fdp) > 1e-15 or abs(naive_fmp - err.fmp) > 1e-15:
                raise RuntimeError("Fdp/Fmp cross-check mismatch")
            row.update(nvs=int(sel.size), fdp=err.fdp, fmp=err.fmp)
            mask = np.zeros(design.p, dtype=bool)
            mask[sel] = True
            out.append((row, mask))
        return rep, out, sd.beta != 0, None
    except Exception as exc:  # noqa: BLE001 - a failed replication is recorded, not fatal
        return rep, None, None, f"{type(exc).__name__}: {exc}"


def run_replications(design: SimDesign, n_reps: int, q: float = 0.15,
                     methods=METHODS, seed: int = 0, n_jobs: int = 1, gamma: float = 6.0,
                     n_folds: int = 5, n_lambda: int = 100) -> RepSummary:
    """Generate, fit and score ``n_reps`` datasets.

    Each replication uses its own substream of ``seed`` so results do not
    depend on ``n_jobs`` or execution order.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
    tasks = [(design, r, seed, q, methods, gamma, n_folds, n_lambda) for r in range(n_reps)]
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            results = list(ex.map(_one_rep, tasks))
    else:
        results = [_one_rep(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    records, failures = [], []
    freq = {m: np.zeros(design.p) for m in methods}
    truth = None
    ok = 0
    for rep, out, tr, err in results:
        if err is not None:
            failures.append({"rep": rep, "error": err})
            continue
        ok += 1
        truth = tr if truth is None else truth | tr
        for row, mask in out:
            records.append(row)
            freq[row["method"]] += mask
    means, sds = {}, {}
    for m in methods:
        rows = [r for r in records if r["method"] == m]
        means[m], sds[m] = {}, {}
        for key, col in (("NVS", "nvs"), ("FDR", "fdp"), ("FMR", "fmp")):
            vals = [float(r[col]) for r in rows]
            mu = math.fsum(vals) / len(vals) if vals else float("nan")
            var = math.fsum((v - mu) ** 2 for v in vals) / (len(vals) - 1) if len(vals) > 1 else 0.0
            means[m][key] = mu
            sds[m][key] = math.sqrt(var)
        freq[m] = freq[m] / max(ok, 1)
    return RepSummary(design.name, n_reps, q, methods, records, means, sds, freq,
                      truth if truth is not None else np.zeros(design.p, dtype=bool), failures)


def write_reps_csv(path, summary: RepSummary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REP_COLUMNS)
        for r in summary.records:
            w.writerow(["" if r[c] is None else repr(r[c]) if isinstance(r[c], float) else r[c]
                        for c in REP_COLUMNS])


def write_summary_json(path, summary: RepSummary) -> None:
    with open(path, "w") as fh:
        json.dump(summary.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def design_dict(design: SimDesign) -> dict:
    return asdict(design)
