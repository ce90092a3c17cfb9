"""Command-line entry point: ``spidr fit|select|simulate|paths``.

Every option can also be set through an environment variable named
``SPIDR_<COMMAND>_<OPTION>``, e.g. ``SPIDR_FIT_Q=0.1``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import cd_solver, fdr, sim
from .core import Dataset, InvalidInputError, read_csv, standardize
from .penalty import FAMILIES, LASSO, MCP
from .pipeline import run_spidr
from .semipenalized import semi_penalized_path

SCHEMA_VERSION = 1
FIT_COLUMNS = ("j", "name", "beta_hat", "beta_hat_original", "se", "z", "converged",
               "excluded", "collinear", "s_hat_size")
CURVE_COLUMNS = ("t", "R", "v_hat", "q0_hat", "q_hat")
PATH_COLUMNS = ("method", "j", "lambda", "beta")

EXIT_INVALID = 2


def _fail(msg):
    click.echo(f"error: {msg}", err=True)
    sys.exit(EXIT_INVALID)


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _cells(values):
    out = []
    for v in values:
        if v is None:
            out.append("")
        elif isinstance(v, (bool, np.bool_)):
            out.append(str(bool(v)).lower())
        elif isinstance(v, (float, np.floating)):
            out.append(repr(float(v)) if math.isfinite(v) else "")
        else:
            out.append(str(v))
    return out


def _write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(_cells(r))


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _outdir(path):
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _fail(f"cannot create output directory {p}: {exc}")
    if not os.access(p, os.W_OK):
        _fail(f"output directory {p} is not writable")
    return p


def _load(path, header) -> Dataset:
    try:
        return read_csv(path, header=header)
    except OSError as exc:
        _fail(f"cannot read {path}: {exc.strerror or exc}")
    except InvalidInputError as exc:
        _fail(f"{path}: {exc}")


def _default_threads():
    return os.cpu_count() or 1


def _check_common(q, gamma, n_folds):
    if not 0 < q < 1:
        _fail("q must lie in (0, 1)")
    if not gamma > 1:
        _fail("gamma must be greater than 1")
    if n_folds < 2:
        _fail("n-folds must be at least 2")


def _fit_payload(res, data, col_names):
    fit = res.fit
    _, coef = data.to_original_scale(fit.beta_hat)
    scale = np.where(data.excluded, np.nan, data.x_scale)
    return {
        "schema_version": SCHEMA_VERSION,
        "n": data.n,
        "p": data.p,
        "family": res.fit.spec.family,
        "gamma": res.fit.spec.gamma,
        "lambda_hat": res.cv.lambda_hat,
        "sigma2_hat": res.sigma2.value,
        "sigma2_support_truncated": bool(res.sigma2.truncated),
        "A": res.A,
        "A_flag": bool(res.A_flag),
        "columns": [
            {
                "j": j + 1,
                "name": col_names[j],
                "beta_hat": _num(fit.beta_hat[j]),
                "beta_hat_original": _num(coef[j]),
                "se": _num(fit.se[j]),
                "se_original": _num(fit.se[j] / scale[j]),
                "z": _num(fit.z[j]),
                "converged": bool(fit.converged[j]),
                "excluded": bool(fit.excluded[j]),
                "collinear": bool(fit.collinear[j]),
                "s_hat": [int(k) + 1 for k in fit.s_hat[j]],
            }
            for j in range(data.p)
        ],
        "warnings": list(res.warnings),
    }


def _fit_rows(payload):
    for c in payload["columns"]:
        yield (c["j"], c["name"], c["beta_hat"], c["beta_hat_original"], c["se"], c["z"],
               c["converged"], c["excluded"], c["collinear"], len(c["s_hat"]))


def _selection_payload(sel, q, p, se=None):
    t = None if math.isinf(sel.t_hat) else sel.t_hat
    return {
        "schema_version": SCHEMA_VERSION,
        "q": q,
        "p": p,
        "A": sel.dispersion_A,
        "t_hat": t,
        "q_hat_at_t": sel.q_hat_at_t,
        "selected": [int(j) + 1 for j in sel.selected],
        "ci": [
            {"j": int(j) + 1, "lower": float(lo), "upper": float(hi)}
            for j, lo, hi in zip(sel.selected, sel.ci_lower, sel.ci_upper)
        ],
    }


def _curve_rows(curve):
    return zip(curve.thresholds, curve.r_of_t, curve.v_hat, curve.q0_hat,
               curve.q_hat_reported)


def _names(data):
    return data.col_names or tuple(f"x{j + 1}" for j in range(data.p))


def _fit_options(f):
    opts = [
        click.option("--q", type=float, default=0.15, show_default=True,
                     help="Nominal FDR level."),
        click.option("--gamma", type=float, default=6.0, show_default=True,
                     help="MCP concavity."),
        click.option("--family", type=click.Choice(FAMILIES), default=MCP,
                     show_default=True),
        click.option("--n-folds", type=int, default=5, show_default=True),
        click.option("--n-lambda", type=int, default=100, show_default=True),
        click.option("--lambda-min-ratio", type=float, default=None,
                     help="Smallest lambda as a fraction of lambda_max."),
        click.option("--sigma2", type=float, default=None,
                     help="Use this error variance instead of estimating it."),
        click.option("--A", "A", type=float, default=None,
                     help="Use this dispersion value instead of estimating it."),
        click.option("--denominator", type=click.Choice(["augmented", "classical"]),
                     default="augmented", show_default=True,
                     help="Degrees of freedom in the split-refit variance: n2+|S| or n2-|S|."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--threads", type=int, default=None,
                     help="Worker cap; defaults to the number of cores."),
        click.option("--header/--no-header", default=False, show_default=True,
                     help="Input CSV has a header row."),
        click.option("--out", "out", type=click.Path(file_okay=False), default=".",
                     show_default=True, help="Output directory."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _run(input, q, gamma, family, n_folds, n_lambda, lambda_min_ratio, sigma2, A,
         denominator, seed, threads, header):
    _check_common(q, gamma, n_folds)
    if sigma2 is not None and not sigma2 > 0:
        _fail("sigma2 must be positive")
    raw = _load(input, header)
    data = standardize(raw)
    try:
        res = run_spidr(data, q=q, gamma=gamma, family=family, n_folds=n_folds,
                        n_lambda=n_lambda, min_ratio=lambda_min_ratio, seed=seed,
                        sigma2=sigma2, A=A, denominator=denominator,
                        n_jobs=threads or _default_threads())
    except InvalidInputError as exc:
        _fail(str(exc))
    for w in res.warnings:
        click.echo(f"warning: {w}", err=True)
    return raw, data, res


@click.group(context_settings={"auto_envvar_prefix": "SPIDR",
                               "help_option_names": ["-h", "--help"]})
@click.version_option(package_name="artifact")
def main():
    """Semi-penalized estimation and FDR-controlled selection."""


@main.command()
@click.argument("input", type=click.Path(dir_okay=False))
@_fit_options
@click.option("--format", "fmt", type=click.Choice(["csv", "json", "both"]), default="both",
              show_default=True)
def fit(input, q, gamma, family, n_folds, n_lambda, lambda_min_ratio, sigma2, A,
        denominator, seed, threads, header, out, fmt):
    """Estimate every coefficient with its standard error and z-statistic.

    INPUT is a CSV whose first column is the response. Writes fit.json
    and/or fit.csv to --out.
    """
    outdir = _outdir(out)
    raw, data, res = _run(input, q, gamma, family, n_folds, n_lambda, lambda_min_ratio,
                          sigma2, A, denominator, seed, threads, header)
    payload = _fit_payload(res, data, _names(raw))
    if fmt in ("json", "both"):
        _write_json(outdir / "fit.json", payload)
    if fmt in ("csv", "both"):
        _write_rows(outdir / "fit.csv", FIT_COLUMNS, _fit_rows(payload))


@main.command()
@click.argument("input", type=click.Path(dir_okay=False))
@_fit_options
@click.option("--from-fit", is_flag=True, default=False,
              help="INPUT is a fit.json produced by `spidr fit`.")
def select(input, q, gamma, family, n_folds, n_lambda, lambda_min_ratio, sigma2, A,
           denominator, seed, threads, header, out, from_fit):
    """Select variables at FDR level --q; writes selection.json and fdr_curve.csv.

    Indices are 1-based in input column order; t_hat is null when nothing
    is selected.
    """
    _check_common(q, gamma, n_folds)
    outdir = _outdir(out)
    if from_fit:
        try:
            with open(input) as fh:
                payload = json.load(fh)
            cols = payload["columns"]
            p = int(payload["p"])
        except OSError as exc:
            _fail(f"cannot read {input}: {exc.strerror or exc}")
        except (ValueError, KeyError, TypeError) as exc:
            _fail(f"{input}: not a fit file ({exc})")
        usable = [c for c in cols if c["se"] is not None]
        z = np.zeros(p)
        se = np.full(p, np.nan)
        beta = np.zeros(p)
        for c in usable:
            z[c["j"] - 1] = c["z"]
            se[c["j"] - 1] = c["se"]
            beta[c["j"] - 1] = c["beta_hat"]
        if A is None:
            A = fdr.estimate_dispersion_A(np.array([c["z"] for c in usable]))
        sel = fdr.select(z, se, beta, p=p, q=q, A=A)
    else:
        raw, data, res = _run(input, q, gamma, family, n_folds, n_lambda, lambda_min_ratio,
                              sigma2, A, denominator, seed, threads, header)
        sel = res.selection
        p = data.p
    _write_json(outdir / "selection.json", _selection_payload(sel, q, p))
    _write_rows(outdir / "fdr_curve.csv", CURVE_COLUMNS, _curve_rows(sel.curve))


@main.command()
@click.option("--design", required=True, help=f"One of {', '.join(sim.DESIGNS)}.")
@click.option("--n-reps", type=int, default=20, show_default=True)
@click.option("--q", type=float, default=0.15, show_default=True)
@click.option("--gamma", type=float, default=6.0, show_default=True)
@click.option("--n-folds", type=int, default=5, show_default=True)
@click.option("--n-lambda", type=int, default=100, show_default=True)
@click.option("--methods", default=",".join(sim.METHODS), show_default=True,
              help="Comma-separated subset of lasso,mcp,spidr.")
@click.option("--a", "a", type=float, default=None, help="PathDemo factor loading.")
@click.option("--sigma", type=float, default=None, help="Override the noise level.")
@click.option("--random-support", is_flag=True, default=False,
              help="Place the nonzero coefficients at random indices.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=None,
              help="Worker processes; defaults to the number of cores.")
@click.option("--out", "out", type=click.Path(file_okay=False), default=".",
              show_default=True)
def simulate(design, n_reps, q, gamma, n_folds, n_lambda, methods, a, sigma, random_support,
             seed, threads, out):
    """Run seeded replications; writes summary.json and reps.csv."""
    _check_common(q, gamma, n_folds)
    if design not in sim.DESIGNS:
        _fail(f"unknown design {design!r}; valid names: {', '.join(sim.DESIGNS)}")
    if n_reps < 1:
        _fail("n-reps must be at least 1")
    meths = tuple(m.strip() for m in methods.split(",") if m.strip())
    bad = [m for m in meths if m not in sim.METHODS]
    if bad or not meths:
        _fail(f"unknown method(s) {bad}; valid: {', '.join(sim.METHODS)}")
    over = {}
    if a is not None:
        over["a"] = a
    if sigma is not None:
        over["sigma"] = sigma
    if random_support:
        over["random_support"] = True
    outdir = _outdir(out)
    d = sim.make_design(design, **over)
    summary = sim.run_replications(d, n_reps, q=q, methods=meths, seed=seed,
                                   n_jobs=threads or _default_threads(), gamma=gamma,
                                   n_folds=n_folds, n_lambda=n_lambda)
    for f in summary.failures:
        click.echo(f"warning: replication {f['rep']} failed: {f['error']}", err=True)
    payload = summary.to_json()
    payload["seed"] = seed
    payload["design_params"] = {k: (list(v) if isinstance(v, tuple) else v)
                                for k, v in sim.design_dict(d).items()}
    payload["selection_frequency"] = {m: [float(v) for v in summary.selection_freq[m]]
                                      for m in summary.methods}
    _write_json(outdir / "summary.json", payload)
    sim.write_reps_csv(outdir / "reps.csv", summary)


def _parse_indices(text, p):
    if not text:
        return []
    try:
        idx = sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        _fail(f"bad index list {text!r}")
    if idx and (idx[0] < 1 or idx[-1] > p):
        _fail(f"indices must lie in 1..{p}")
    return idx


@main.command()
@click.argument("input", required=False, type=click.Path(dir_okay=False))
@click.option("--design", default=None, help="Generate data from a named design instead of INPUT.")
@click.option("--a", "a", type=float, default=None, help="PathDemo factor loading.")
@click.option("--index", "index", default="", help="Comma-separated 1-based indices for "
              "semi-penalized paths; empty for Lasso/MCP paths only.")
@click.option("--gamma", type=float, default=6.0, show_default=True)
@click.option("--n-lambda", type=int, default=100, show_default=True)
@click.option("--lambda-min-ratio", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--header/--no-header", default=False, show_default=True)
@click.option("--out", "out", type=click.Path(file_okay=False), default=".",
              show_default=True)
def paths(input, design, a, index, gamma, n_lambda, lambda_min_ratio, seed, header, out):
    """Lasso, MCP and semi-penalized solution paths as long-format paths.csv."""
    if not gamma > 1:
        _fail("gamma must be greater than 1")
    if (input is None) == (design is None):
        _fail("give exactly one of INPUT or --design")
    if design is not None:
        if design not in sim.DESIGNS:
            _fail(f"unknown design {design!r}; valid names: {', '.join(sim.DESIGNS)}")
        over = {} if a is None else {"a": a}
        raw = sim.generate(sim.make_design(design, **over), seed).data
    else:
        raw = _load(input, header)
    outdir = _outdir(out)
    data = standardize(raw)
    idx = _parse_indices(index, data.p)
    try:
        grid = cd_solver.make_grid(data, n_lambda, lambda_min_ratio)
    except InvalidInputError as exc:
        _fail(str(exc))
    rows = []
    for fam in (LASSO, MCP):
        pf = cd_solver.solve_path(data, fam, gamma, grid)
        for j in range(data.p):
            for lam, b in zip(grid.values, pf.betas[j]):
                rows.append((fam, j + 1, lam, b))
    for j in idx:
        bj = semi_penalized_path(j - 1, data, MCP, gamma, grid)
        for lam, b in zip(grid.values, bj):
            rows.append(("spidr", j, lam, b))
    _write_rows(outdir / "paths.csv", PATH_COLUMNS, rows)


if __name__ == "__main__":
    main()
