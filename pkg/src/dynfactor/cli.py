"""Batch command-line entry point for the whole pipeline.

Subcommands: clean, pca, ic, fit, capm, diagnose, nowcast, simulate.  Every
table is emitted as CSV (or JSON with --json); figures are served as data
files, not images.  Exit codes: 0 success, 2 usage error, 3 data error,
4 numerical failure.  The DYNFACTOR_OUT environment variable supplies the
default output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import criteria as criteria_mod
from . import nowcast as nowcast_mod
from .estimation import FitOptions, fit_mle, standard_errors
from .exceptions import DataError, NumericalError
from .panels import compute_returns, filter_missing, load_price_csv, load_returns_csv, write_returns_csv
from .pca import principal_components
from .simulate import simulate_dfm
from .statespace import DFMSpec, params_from_json, params_to_json
from .validation import capm_betas, correlation

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _out_dir(args) -> Path:
    base = args.out if args.out else os.environ.get("DYNFACTOR_OUT", ".")
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require_file(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    return path


def _emit_table(frame: pd.DataFrame, path: Path, as_json: bool) -> Path:
    """Write a table as CSV, or as a records-JSON file with --json."""
    if as_json:
        path = path.with_suffix(".json")
        payload = json.loads(frame.to_json(orient="records"))
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        frame.to_csv(path, index=False)
    return path


def _market_series(path) -> pd.Series:
    panel = load_returns_csv(_require_file(path))
    return pd.Series(panel.returns[:, 0], index=panel.dates)


def _parse_quarter(text: str) -> tuple[int, int]:
    try:
        year, qtr = text.upper().split("Q")
        return int(year), int(qtr)
    except ValueError as exc:
        raise DataError(f"quarter must look like 2015Q1, got {text!r}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_clean(args):
    panel = load_price_csv(_require_file(args.input))
    panel = filter_missing(panel, args.threshold)
    returns = compute_returns(panel, center=not args.no_center,
                              percent=not args.raw_scale)
    out = _out_dir(args)
    write_returns_csv(returns, out / args.output)
    means = pd.DataFrame({"ticker": returns.tickers, "mean": returns.means})
    _emit_table(means, out / f"{Path(args.output).stem}_means.csv", args.json)
    print(f"kept {returns.n_series} series over {returns.n_dates} dates")


def _cmd_pca(args):
    panel = load_returns_csv(_require_file(args.input))
    result = principal_components(panel, args.k, use_correlation=args.correlation)
    out = _out_dir(args)
    cols = [f"pc{j + 1}" for j in range(args.k)]
    _emit_table(pd.DataFrame({"component": cols, "eigenvalue": result.eigenvalues}),
                out / "eigenvalues.csv", args.json)
    load_frame = pd.DataFrame(result.loadvectors, columns=cols)
    load_frame.insert(0, "ticker", panel.tickers)
    _emit_table(load_frame, out / "loadvectors.csv", args.json)
    comp_frame = pd.DataFrame(result.components, columns=cols)
    comp_frame.insert(0, "date", panel.dates.strftime("%Y-%m-%d"))
    _emit_table(comp_frame, out / "components.csv", args.json)


def _cmd_ic(args):
    panel = load_returns_csv(_require_file(args.input))
    table = criteria_mod.bai_ng_table(panel, args.n_max)
    out = _out_dir(args)
    _emit_table(table.to_frame(), out / "criteria.csv", args.json)
    for name, best in table.argmin().items():
        print(f"{name}: argmin n = {best}")


def _cmd_fit(args):
    panel = load_returns_csv(_require_file(args.input))
    opts = FitOptions(maxiter=args.maxiter, compute_std_errors=args.se)
    if args.auto_order:
        p_grid = [int(v) for v in args.p_grid.split(",")]
        q_grid = [int(v) for v in args.q_grid.split(",")]
        p, q = criteria_mod.select_order(panel, args.n, p_grid, q_grid,
                                         opts=opts, jobs=args.jobs)
        print(f"selected order p={p}, q={q}")
    else:
        p, q = args.p, args.q
    spec = DFMSpec(n=args.n, p=p, q=q, s=panel.n_series)
    fitted = fit_mle(panel, spec, opts)

    out = _out_dir(args)
    (out / "params.json").write_text(params_to_json(fitted.params, spec) + "\n")
    date_col = panel.dates.strftime("%Y-%m-%d")
    factor_cols = [f"factor{j + 1}" for j in range(spec.n)]
    for name, grid in (("factors_filtered", fitted.factors_filtered),
                       ("factors_smoothed", fitted.factors_smoothed)):
        frame = pd.DataFrame(grid, columns=factor_cols)
        frame.insert(0, "date", date_col)
        frame.to_csv(out / f"{name}.csv", index=False)

    loadings = pd.DataFrame(fitted.params.beta,
                            columns=[f"beta{j + 1}" for j in range(spec.n)])
    loadings.insert(0, "ticker", panel.tickers)
    loadings["sigma"] = fitted.params.sigma
    if fitted.std_errors is not None:
        for j in range(spec.n):
            loadings[f"beta{j + 1}_se"] = fitted.std_errors.beta[:, j]
            stars = np.where(fitted.std_errors.beta_significant[:, j], "*", "")
            loadings[f"beta{j + 1}_signif"] = stars
    _emit_table(loadings, out / "loadings.csv", args.json)

    report = {
        "n": spec.n, "p": spec.p, "q": spec.q, "s": spec.s,
        "loglik": fitted.loglik,
        "bic": criteria_mod.bic(fitted.loglik, spec.n_free_params, panel.n_dates),
        "iterations": fitted.iterations,
        "converged": fitted.converged,
    }
    (out / "fit_report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"loglik {fitted.loglik:.4f} after {fitted.iterations} iterations"
          f" (converged={fitted.converged})")


def _cmd_capm(args):
    panel = load_returns_csv(_require_file(args.input))
    market = _market_series(args.market)
    result = capm_betas(panel, market, risk_free=args.risk_free)
    out = _out_dir(args)
    frame = pd.DataFrame({
        "ticker": result.tickers,
        "beta": result.betas,
        "alpha": result.intercepts,
        "r_squared": result.r_squared,
    })
    _emit_table(frame, out / "capm_betas.csv", args.json)


def _cmd_diagnose(args):
    panel = load_returns_csv(_require_file(args.input))
    market = _market_series(args.market)
    fit_dir = Path(args.fit_dir)
    params, spec = params_from_json(_require_file(fit_dir / "params.json").read_text())
    factors = pd.read_csv(fit_dir / "factors_smoothed.csv")
    market_aligned = market.reindex(panel.dates).to_numpy()

    pca = principal_components(panel, spec.n)
    capm = capm_betas(panel, market, risk_free=args.risk_free)

    rows = []
    for j in range(spec.n):
        rows.append(("capm_beta", f"loading{j + 1}",
                     correlation(capm.betas, params.beta[:, j])))
    for j in range(spec.n):
        fac = factors[f"factor{j + 1}"].to_numpy()
        rows.append((f"factor{j + 1}", "index", correlation(fac, market_aligned)))
        rows.append((f"factor{j + 1}", f"pc{j + 1}",
                     correlation(fac, pca.components[:, j])))
    for j in range(spec.n):
        rows.append((f"pc{j + 1}", "index",
                     correlation(pca.components[:, j], market_aligned)))
    frame = pd.DataFrame(rows, columns=["series_1", "series_2", "correlation"])
    out = _out_dir(args)
    _emit_table(frame, out / "correlations.csv", args.json)
    print(frame.to_string(index=False))


def _cmd_nowcast(args):
    gdp = nowcast_mod.load_gdp_csv(_require_file(args.gdp))
    fit_dir = Path(args.fit_dir)
    smoothed = pd.read_csv(_require_file(fit_dir / "factors_smoothed.csv"))
    filtered = pd.read_csv(_require_file(fit_dir / "factors_filtered.csv"))
    dates = pd.DatetimeIndex(pd.to_datetime(smoothed["date"]))
    factor_cols = [c for c in smoothed.columns if c != "date"]
    indicators = nowcast_mod.monthly_indicators(
        dates, smoothed[factor_cols].to_numpy(), filtered[factor_cols].to_numpy(),
        boundary=args.boundary,
    )
    window = (_parse_quarter(args.train_start), _parse_quarter(args.train_end))
    out_window = None
    if args.test_end:
        start = (_parse_quarter(args.test_start) if args.test_start
                 else nowcast_mod.quarter_add(window[1], 1))
        out_window = (start, _parse_quarter(args.test_end))

    baseline = nowcast_mod.fit_ar1(gdp, window, out_window)
    bridge = nowcast_mod.fit_bridge(gdp, indicators, window, out_window)

    out = _out_dir(args)
    rows = []
    for label, model in (("ar1", baseline), ("ar1_factors", bridge)):
        for qs, preds, actuals, sample in (
            (model.in_quarters, model.in_pred, model.in_actual, "in"),
            (model.out_quarters, model.out_pred, model.out_actual, "out"),
        ):
            for (year, qtr), pred, actual in zip(qs, preds, actuals):
                rows.append((label, year, qtr, sample, actual, pred))
    preds = pd.DataFrame(rows, columns=["model", "year", "quarter", "sample",
                                        "actual", "predicted"])
    _emit_table(preds, out / "predictions.csv", args.json)
    summary = pd.DataFrame({
        "model": ["ar1", "ar1_factors"],
        "in_sample_rmse": [baseline.in_sample_rmse, bridge.in_sample_rmse],
        "out_sample_rmse": [baseline.out_sample_rmse, bridge.out_sample_rmse],
    })
    _emit_table(summary, out / "rmse_summary.csv", args.json)
    print(summary.to_string(index=False))


def _cmd_simulate(args):
    params, spec = params_from_json(_require_file(args.params).read_text())
    sim = simulate_dfm(params, spec, t_obs=args.t_obs, seed=args.seed,
                       burn_in=args.burn_in, start_date=args.start_date)
    out = _out_dir(args)
    write_returns_csv(sim.returns, out / "returns.csv")
    frame = pd.DataFrame(sim.true_factors,
                         columns=[f"factor{j + 1}" for j in range(spec.n)])
    frame.insert(0, "date", sim.returns.dates.strftime("%Y-%m-%d"))
    frame.to_csv(out / "factors_true.csv", index=False)
    print(f"simulated {sim.returns.n_dates} rows x {sim.returns.n_series} series "
          f"(seed {args.seed})")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynfactor",
        description="Dynamic factor analysis of return panels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output directory "
                       "(default: DYNFACTOR_OUT or current directory)")
        p.add_argument("--json", action="store_true",
                       help="emit tables as JSON instead of CSV")

    p = sub.add_parser("clean", help="filter a price panel and emit returns")
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=0.01,
                   help="max missing fraction per series (default 0.01)")
    p.add_argument("--output", default="returns.csv")
    p.add_argument("--no-center", action="store_true")
    p.add_argument("--raw-scale", action="store_true",
                   help="plain fractional returns instead of percent points")
    common(p)
    p.set_defaults(func=_cmd_clean)

    p = sub.add_parser("pca", help="principal components of a returns panel")
    p.add_argument("--input", required=True)
    p.add_argument("-k", type=int, default=2)
    p.add_argument("--correlation", action="store_true",
                   help="use the correlation matrix instead of the covariance")
    common(p)
    p.set_defaults(func=_cmd_pca)

    p = sub.add_parser("ic", help="factor-count information criteria")
    p.add_argument("--input", required=True)
    p.add_argument("--n-max", type=int, default=8)
    common(p)
    p.set_defaults(func=_cmd_ic)

    p = sub.add_parser("fit", help="maximum-likelihood factor model fit")
    p.add_argument("--input", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--auto-order", action="store_true",
                   help="select p, q by BIC over the grids")
    p.add_argument("--p-grid", default="1,2,3")
    p.add_argument("--q-grid", default="0,1,2,3,4,5")
    p.add_argument("--maxiter", type=int, default=500)
    p.add_argument("--se", action="store_true",
                   help="compute standard errors and significance stars")
    p.add_argument("--jobs", type=int, default=1,
                   help="concurrent fits during order selection")
    common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("capm", help="per-series CAPM betas against a market series")
    p.add_argument("--input", required=True)
    p.add_argument("--market", required=True,
                   help="returns CSV whose first series is the market/index")
    p.add_argument("--risk-free", type=float, default=0.0)
    common(p)
    p.set_defaults(func=_cmd_capm)

    p = sub.add_parser("diagnose",
                       help="correlation tables: factors vs index, PCs, CAPM betas")
    p.add_argument("--input", required=True)
    p.add_argument("--market", required=True)
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--risk-free", type=float, default=0.0)
    common(p)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("nowcast", help="AR(1) and factor-augmented GDP bridge")
    p.add_argument("--gdp", required=True)
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--boundary", required=True,
                   help="first out-of-sample date, e.g. 2021-01-01")
    p.add_argument("--train-start", required=True, help="e.g. 2015Q1")
    p.add_argument("--train-end", required=True, help="e.g. 2020Q4")
    p.add_argument("--test-start", default=None)
    p.add_argument("--test-end", default=None)
    common(p)
    p.set_defaults(func=_cmd_nowcast)

    p = sub.add_parser("simulate", help="draw a synthetic panel from parameters")
    p.add_argument("--params", required=True, help="parameter JSON file")
    p.add_argument("--t-obs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--start-date", default="2015-01-01")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    return parser


def run(argv=None) -> int:
    """Dispatch a subcommand; returns the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except DataError as exc:
        print(json.dumps({"error": str(exc), "code": EXIT_DATA}), file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(json.dumps({"error": str(exc), "code": EXIT_NUMERICAL}),
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())
