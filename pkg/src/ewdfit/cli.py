"""Command-line interface.

Subcommands: ``fit``, ``regress``, ``tune``, ``test``, ``are`` and
``simulate``. Human-readable tables go to stdout; plot data are written
as two-column ``x,y`` CSV files to the output directory (``--output-dir``,
else ``$EWDFIT_OUTPUT_DIR``, else ``./ewdfit-output``).

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asymptotics import SingularMatrixError, are, empirical_matrices, influence, model_matrices
from .datasets import EMBEDDED, DataError, count_table, ingest_csv, load_dataset, write_csv
from .divergence import DPD, EWD, KL, L2, weight
from .estimation import EstimationError, estimate_iid, fit_mle
from .models import Poisson, get_model
from .numerics import DomainError, IntegrationError, OptimizationError
from .regression import estimate_regression, ols
from .simulation import (ContaminationScheme, ExperimentSpec, REFERENCE_FSRE, load_config,
                         mse_curve, parse_estimator, run_experiment, run_table)
from .testing import EigenvalueCountError, ewdts_normal_mean
from .tuning import default_grid, select_beta, select_beta_regression

__all__ = ["main", "build_parser", "RunConfig", "ConfigError", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA",
           "EXIT_NUMERICAL", "OUTPUT_ENV"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
OUTPUT_ENV = "EWDFIT_OUTPUT_DIR"
MODELS = ("normal", "normal-mean", "normal-scale", "exponential", "poisson")


class ConfigError(ValueError):
    """Invalid command-line options or configuration file."""


@dataclass
class RunConfig:
    """Validated options for one subcommand."""

    command: str
    model: str | None = None
    generators: list = field(default_factory=list)
    dataset: str | None = None
    csv: str | None = None
    output_dir: Path = Path("ewdfit-output")
    seed: int = 0
    digits: int = 3
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------

def _float_list(text):
    """``"a,b,c"`` or ``"lo:hi:step"`` to a list of floats."""
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            count = int(np.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + i * step, 12) for i in range(count)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma list or lo:hi:step, got {text!r}") from None


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return v


def _add_source(p, kind_default="sample"):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help=f"embedded dataset ({', '.join(EMBEDDED)})")
    src.add_argument("--csv", help="CSV file with a header row")
    p.add_argument("--column", help="column holding the sample (CSV input)")
    p.add_argument("--kind", choices=("sample", "counts"), default=None,
                   help=f"how to read CSV input (default: {kind_default}, counts for poisson)")


def _add_generator(p, multiple=False):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--ewd", type=_float_list if multiple else _nonneg, help="EWD tuning beta")
    g.add_argument("--dpd", type=_float_list if multiple else _nonneg, help="DPD tuning alpha")
    g.add_argument("--l2", action="store_true", help="minimum L2 distance")
    g.add_argument("--mle", action="store_true", help="maximum likelihood")


def build_parser():
    def common(default):
        # accepted before or after the subcommand; subcommand copies never override
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--output-dir", default=None if default else argparse.SUPPRESS,
                       help=f"directory for CSV output (default ${OUTPUT_ENV} or ./ewdfit-output)")
        p.add_argument("--seed", type=int, default=None if default else argparse.SUPPRESS,
                       help="master random seed (default 0, or the configuration file's)")
        p.add_argument("--digits", type=int, default=3 if default else argparse.SUPPRESS,
                       help="decimals in printed tables")
        return p

    parser = argparse.ArgumentParser(prog="ewdfit", description="Minimum EWD / DPD estimation.",
                                     parents=[common(True)])
    sub = parser.add_subparsers(dest="command", required=True)
    shared = common(False)

    def add(name, text):
        return sub.add_parser(name, help=text, parents=[shared])

    p = add("fit", "i.i.d. minimum divergence fit")
    _add_source(p)
    p.add_argument("--model", required=True, choices=MODELS)
    _add_generator(p)
    p.add_argument("--ddof", type=int, default=0, choices=(0, 1), help="MLE scale convention")
    p.add_argument("--se", choices=("model", "empirical"), default="model",
                   help="sandwich matrices at the fitted model or from the data")

    p = add("regress", "normal linear regression fit")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="embedded regression dataset (telephone, stars, alcohol)")
    src.add_argument("--csv", help="CSV file with a header row")
    p.add_argument("--response", help="response column (required for CSV input)")
    p.add_argument("--predictors", help="comma-separated predictor columns")
    p.add_argument("--no-intercept", action="store_true")
    _add_generator(p)
    p.add_argument("--subsets", type=int, default=300, help="elemental starting fits")

    p = add("tune", "choose beta by estimated MSE")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="embedded dataset")
    src.add_argument("--csv", help="CSV file")
    p.add_argument("--column")
    p.add_argument("--kind", choices=("sample", "counts", "regression"), default=None)
    p.add_argument("--model", choices=MODELS, help="model for i.i.d. data")
    p.add_argument("--response", help="response column for regression CSV input")
    p.add_argument("--predictors")
    p.add_argument("--grid", type=_float_list, help="beta grid, comma list or lo:hi:step")

    p = add("test", "EWD test of H0: mu = mu0 under N(mu, sigma^2)")
    _add_source(p)
    p.add_argument("--mu0", type=float, required=True)
    p.add_argument("--beta", type=_float_list, required=True, help="one or more beta values")
    p.add_argument("--gamma", type=_positive, help="statistic tuning (default: beta)")
    p.add_argument("--reps", type=int, default=100_000, help="Monte Carlo replications")
    p.add_argument("--exact", action="store_true", help="chi-square tail instead of Monte Carlo")

    p = add("are", "asymptotic relative efficiency grid")
    p.add_argument("--model", default="normal-mean", choices=MODELS)
    p.add_argument("--theta", type=_float_list, help="parameter value (default: standard)")
    p.add_argument("--grid", type=_float_list, default=[0.001, 0.004, 0.016, 0.062, 0.25, 1, 4])
    p.add_argument("--component", type=int, default=0)

    p = add("simulate", "contamination experiments")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="TOML experiment file")
    src.add_argument("--design", choices=sorted(REFERENCE_FSRE), help="standard design")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--compare", action="store_true", help="print published FSREs alongside")
    return parser


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _generator(args, default=None):
    if getattr(args, "mle", False):
        return KL
    if getattr(args, "l2", False):
        return L2
    if getattr(args, "ewd", None) is not None:
        return EWD(args.ewd)
    if getattr(args, "dpd", None) is not None:
        return DPD(args.dpd)
    if default is None:
        raise ConfigError("choose an estimator: --ewd, --dpd, --l2 or --mle")
    return default


def _output_dir(args):
    if args.output_dir:
        return Path(args.output_dir)
    return Path(os.environ.get(OUTPUT_ENV) or "ewdfit-output")


def make_config(args):
    """Validate parsed arguments before any computation."""
    seed = 0 if args.seed is None else args.seed
    cfg = RunConfig(args.command, output_dir=_output_dir(args), seed=seed, digits=args.digits)
    cfg.dataset = getattr(args, "data", None)
    cfg.csv = getattr(args, "csv", None)
    if cfg.dataset is not None and cfg.dataset.lower() not in EMBEDDED:
        raise ConfigError(f"unknown dataset {cfg.dataset!r}; embedded datasets are {', '.join(EMBEDDED)}")
    if cfg.digits < 0 or cfg.digits > 12:
        raise ConfigError("--digits must lie in 0..12")
    cmd = args.command
    if cmd == "fit":
        cfg.model = args.model
        cfg.generators = [_generator(args)]
    elif cmd == "regress":
        if cfg.csv and not args.response:
            raise ConfigError("--response is required with --csv")
        cfg.generators = [_generator(args, default=KL)]
        if args.subsets < 0:
            raise ConfigError("--subsets must be non-negative")
    elif cmd == "tune":
        regression = args.kind == "regression" or args.response or (
            cfg.dataset is not None and cfg.dataset.lower() in ("telephone", "stars", "alcohol"))
        if not regression and args.model is None:
            raise ConfigError("--model is required for i.i.d. data")
        cfg.model = None if regression else args.model
        cfg.extra["regression"] = bool(regression)
        if args.grid is not None and (min(args.grid) <= 0 or np.any(np.diff(args.grid) <= 0)):
            raise ConfigError("--grid must be positive and strictly increasing")
    elif cmd == "test":
        if any(b <= 0 for b in args.beta):
            raise ConfigError("--beta values must be positive")
        if not args.exact and args.reps < 10_000:
            raise ConfigError("--reps must be at least 10000")
    elif cmd == "are":
        cfg.model = args.model
        if any(k < 0 for k in args.grid):
            raise ConfigError("--grid values must be non-negative")
    elif cmd == "simulate":
        if args.config:
            path = Path(args.config)
            if not path.is_file():
                raise ConfigError(f"configuration file not found: {path}")
            try:
                design, opts = load_config(path.read_text(encoding="utf-8"))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        else:
            from .simulation import table_design
            design, opts = table_design(args.design), {"n": 200, "reps": 2000, "seed": seed,
                                                      "sample_sizes": None}
        if args.n is not None:
            opts["n"] = args.n
        if args.reps is not None:
            opts["reps"] = args.reps
        if opts["n"] < 2 or opts["reps"] < 1 or args.workers < 1:
            raise ConfigError("need n >= 2, reps >= 1 and workers >= 1")
        if args.seed is not None:
            opts["seed"] = args.seed
        cfg.extra.update(design=design, opts=opts)
    return cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _slug(text):
    return re.sub(r"[^A-Za-z0-9.]+", "_", text).strip("_")


def _fmt(v, digits):
    return f"{v:.{digits}f}" if abs(v) >= 10 ** (-digits) or v == 0 else f"{v:.{digits}e}"


def _load_sample(args, model_name):
    kind = args.kind or ("counts" if model_name == "poisson" else "sample")
    if args.data:
        ds = load_dataset(args.data)
        if ds.kind == "regression":
            if args.column is None:
                raise DataError(f"dataset {ds.name!r} is a regression table; pick --column")
            return ds.column(args.column), ds.name
        return ds.values, ds.name
    ds = ingest_csv(args.csv, kind, column=args.column)
    return ds.values, ds.name


def _write(cfg, name, x, y, header):
    path = write_csv(cfg.output_dir / name, [np.asarray(x, dtype=float), np.asarray(y, dtype=float)], header)
    print(f"wrote {path}")
    return path


def cmd_fit(args, cfg, out):
    model = get_model(cfg.model)
    x, name = _load_sample(args, cfg.model)
    gen = cfg.generators[0]
    d = cfg.digits
    if gen.is_kl:
        est = fit_mle(model, x, ddof=args.ddof)
    else:
        est = estimate_iid(gen, model, x)
    label = "MLE" if gen.is_kl else gen.label
    try:
        bundle = (empirical_matrices(gen, model, est.theta, x) if args.se == "empirical"
                  else model_matrices(gen, model, est.theta))
        est.asymptotics = bundle
        se = est.standard_errors()
    except SingularMatrixError:
        se = np.full(model.p, np.nan)
    out(f"{label} fit of the {model.name} model to {name} (n = {len(x)})")
    for pname, v, s in zip(model.param_names, est.theta, se):
        out(f"  {pname:<8} {_fmt(v, d)}   (se {_fmt(s, d)})")
    if isinstance(model, Poisson):
        observed = count_table(x)
        fitted = _fitted_frequencies(model, est.theta, len(x))
        out("  count      " + "".join(f"{h:>9}" for h in ("0", "1", "2", "3", "4", ">=5")))
        out("  observed   " + "".join(f"{v:>9.0f}" for v in observed))
        out("  fitted     " + "".join(f"{v:>9.{d}f}" for v in fitted))
        _write(cfg, f"fitted_frequencies_{_slug(label)}.csv", np.arange(6), fitted, ["count", "fitted"])
    else:
        th = est.theta
        lo, hi = np.min(x), np.max(x)
        pad = 0.25 * (hi - lo if hi > lo else 1.0)
        grid = np.linspace(lo - pad if not model.positive[0] or model.name.startswith("normal") else 0.0,
                           hi + pad, 401)
        if not model.in_support(grid).all():
            grid = grid[model.in_support(grid)]
        _write(cfg, f"density_{_slug(name)}_{_slug(label)}.csv", grid, model.pdf(grid, th), ["x", "density"])
    return EXIT_OK


def _fitted_frequencies(model, theta, n):
    k = np.arange(5)
    pmf = model.pdf(k.astype(float), theta)
    return n * np.append(pmf, max(0.0, 1.0 - pmf.sum()))


def _load_regression(args):
    if args.data:
        ds = load_dataset(args.data)
        if ds.kind != "regression":
            raise DataError(f"dataset {ds.name!r} is not a regression table")
    else:
        ds = ingest_csv(args.csv, "regression", response=args.response)
    if getattr(args, "response", None) and args.data:
        ds.response = args.response
        if args.response not in ds.columns:
            raise DataError(f"response column {args.response!r} not found")
    if getattr(args, "predictors", None):
        preds = tuple(p.strip() for p in args.predictors.split(","))
        missing = [p for p in preds if p not in ds.columns]
        if missing:
            raise DataError(f"unknown predictor columns {missing}")
        ds.predictors = preds
    elif args.csv:
        ds.predictors = tuple(c for c in ds.columns if c != ds.response)
    return ds


def cmd_regress(args, cfg, out):
    ds = _load_regression(args)
    data = ds.regression(intercept=not args.no_intercept)
    gen = cfg.generators[0]
    d = cfg.digits
    if gen.is_kl:
        coef, res = ols(data)
        sigma = float(np.sqrt(np.mean(res ** 2)))
        gamma, label = coef, "MLE"
        se = np.full(data.s + 1, np.nan)
    else:
        fit = estimate_regression(gen, data, subsets=args.subsets, seed=cfg.seed)
        gamma, sigma, res, label = fit.gamma, fit.sigma, fit.residuals, gen.label
        se = fit.standard_errors()
    out(f"{label} regression of {ds.response} on {', '.join(ds.predictors)} ({ds.name}, n = {data.n})")
    for name, v, s in zip(data.names + ("sigma",), np.append(gamma, sigma), se):
        out(f"  {name:<16} {_fmt(v, d)}   (se {_fmt(s, d)})")
    fitted = data.X @ gamma
    tag = f"{_slug(ds.name)}_{_slug(label)}"
    _write(cfg, f"residuals_{tag}.csv", fitted, res, ["fitted", "residual"])
    if len(ds.predictors) == 1:
        xcol = ds.column(ds.predictors[0])
        order = np.argsort(xcol)
        _write(cfg, f"line_{tag}.csv", xcol[order], fitted[order], [ds.predictors[0], "fitted"])
        _write(cfg, f"points_{_slug(ds.name)}.csv", xcol, ds.column(ds.response),
               [ds.predictors[0], ds.response])
    return EXIT_OK


def cmd_tune(args, cfg, out):
    grid = args.grid if args.grid is not None else default_grid()
    d = cfg.digits
    if cfg.extra["regression"]:
        ds = _load_regression(args)
        res = select_beta_regression(ds.regression(), grid, seed=cfg.seed)
        names = ds.regression().names + ("sigma",)
        name = ds.name
    else:
        model = get_model(cfg.model)
        x, name = _load_sample(args, cfg.model)
        res = select_beta(model, x, grid)
        names = model.param_names
    out(f"tuning on {name}: pilot {res.pilot_label} = "
        + ", ".join(_fmt(v, d) for v in res.pilot))
    out(f"  beta_opt = {res.beta_opt:g}")
    for pname, v in zip(names, res.theta_opt):
        out(f"  {pname:<16} {_fmt(v, d)}")
    out(f"  n * MSE_hat = {res.scaled_mse[np.nanargmin(res.mse)]:.4e}")
    if res.failures:
        out(f"  {len(res.failures)} grid fits failed")
    _write(cfg, f"tuning_{_slug(name)}.csv", res.grid, res.scaled_mse, ["beta", "n_mse_hat"])
    return EXIT_OK


def cmd_test(args, cfg, out):
    x, name = _load_sample(args, "normal")
    betas = list(args.beta)
    pvals = []
    for b in betas:
        r = ewdts_normal_mean(x, args.mu0, b, gamma=args.gamma, reps=args.reps, seed=cfg.seed,
                              exact=args.exact)
        pvals.append(r.pvalue)
        out(f"beta={b:g}: T = {r.statistic:.4f}, lambda = {r.eigenvalues[0]:.4f}, p = {r.pvalue:.4f}")
    if len(betas) > 1:
        _write(cfg, f"pvalue_curve_{_slug(name)}.csv", betas, pvals, ["beta", "pvalue"])
    return EXIT_OK


def _default_theta(model):
    return {"normal": [0.0, 1.0], "normal-mean": [0.0], "normal-scale": [1.0],
            "exponential": [1.0], "poisson": [1.0]}[model]


def cmd_are(args, cfg, out):
    model = get_model(cfg.model)
    theta = np.asarray(args.theta if args.theta else _default_theta(cfg.model), dtype=float)
    d = cfg.digits
    if not 0 <= args.component < model.p:
        raise ConfigError(f"--component must lie in 0..{model.p - 1}")
    out(f"{'k':>8}  {'EWD(k)':>10}  {'DPD(k)':>10}")
    ewd, dpd = [], []
    for k in args.grid:
        e = are(EWD(k), model, theta, args.component) if k > 0 else 1.0
        p = are(DPD(k), model, theta, args.component)
        ewd.append(e)
        dpd.append(p)
        out(f"{k:>8g}  {e:>10.{d}f}  {p:>10.{d}f}")
    _write(cfg, "are_ewd.csv", args.grid, ewd, ["beta", "are"])
    _write(cfg, "are_dpd.csv", args.grid, dpd, ["alpha", "are"])
    t = np.linspace(0.0, 1.0, 201)
    for k in args.grid:
        if k > 0:
            _write(cfg, f"weight_E{k:g}.csv", t, weight(EWD(k), t), ["t", "w"])
        _write(cfg, f"weight_D{k:g}.csv", t, weight(DPD(k), t), ["t", "w"])
    if model.p == 1 and not isinstance(model, Poisson):
        y = np.linspace(theta[0] - 6.0, theta[0] + 6.0, 481) if model.name.startswith("normal") \
            else np.linspace(0.0, 12.0 * theta[0], 481)
        if cfg.model == "normal-scale":
            y = np.linspace(-6.0 * theta[0], 6.0 * theta[0], 481)
        for k in args.grid:
            if k > 0:
                _write(cfg, f"influence_E{k:g}.csv", y, influence(EWD(k), model, theta, y)[:, 0], ["y", "if"])
    return EXIT_OK


def cmd_simulate(args, cfg, out):
    design, opts = cfg.extra["design"], cfg.extra["opts"]
    n, reps, seed = opts["n"], opts["reps"], opts["seed"]
    d = cfg.digits
    if opts.get("sample_sizes"):
        sizes = [int(v) for v in opts["sample_sizes"]]
        gens = [parse_estimator(e) for e in design.estimators if parse_estimator(e).family != "KL"]
        value = design.contaminant_values[0]
        eps = design.eps[0]
        scheme = ContaminationScheme(design.model, [design.theta0], design.contaminant, [value], eps)
        curves = mse_curve(scheme, gens, sizes, reps=reps, seed=seed)
        for g, row in zip(gens, curves):
            out(f"{g.label:<10}" + "".join(f"{v:>12.{max(d, 4)}f}" for v in row))
            _write(cfg, f"mse_curve_{_slug(g.label)}.csv", sizes, row, ["n", "mse"])
        return EXIT_OK
    res = run_table(design, n, reps, seed, workers=args.workers,
                    progress=lambda c: print(f"  done {c}", file=sys.stderr))
    text = res.to_text()
    out(text)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / f"fsre_{_slug(design.name)}.csv").write_text(res.to_csv(), encoding="utf-8")
    (cfg.output_dir / f"fsre_{_slug(design.name)}.txt").write_text(text + "\n", encoding="utf-8")
    print(f"wrote {cfg.output_dir / f'fsre_{_slug(design.name)}.csv'}")
    if args.compare and design.name in REFERENCE_FSRE:
        out("published:")
        for lab, row in zip(res.labels[1:], REFERENCE_FSRE[design.name]):
            out(f"{lab:<10}" + "".join(f"{v:>12.3f}" for v in row))
    flagged = [l for l, f in zip(res.labels, res.failures.max(axis=1)) if f > 0.01 * reps]
    if flagged:
        out(f"flagged (>1% failed fits): {', '.join(flagged)}")
    return EXIT_OK


_COMMANDS = {"fit": cmd_fit, "regress": cmd_regress, "tune": cmd_tune, "test": cmd_test,
             "are": cmd_are, "simulate": cmd_simulate}


def main(argv=None, out=print):
    """Run the CLI; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = make_config(args)
    except ConfigError as exc:
        print(f"ewdfit: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"ewdfit: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"ewdfit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OptimizationError, EstimationError, IntegrationError, SingularMatrixError,
            EigenvalueCountError, np.linalg.LinAlgError) as exc:
        print(f"ewdfit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, ValueError) as exc:
        print(f"ewdfit: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
