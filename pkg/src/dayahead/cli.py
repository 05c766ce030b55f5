"""Command-line entry point: ``dayahead {synth,improve-load,run-dispatch,evaluate}``.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` file whose
keys are flag names (dashes or underscores); flags given on the command line
override it. Outputs land in one run directory (``--out``, else
``$DAYAHEAD_OUTPUT_DIR/<command>``, else ``runs/<command>``) together with a
``manifest.json`` recording the resolved configuration and its hash.

Exit status: 0 success, 2 input error, 3 solve/model error, 4 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .data_io import (
    DataError,
    TimeSeries,
    align,
    fill_gaps,
    read_dispatch_dataset,
    read_series,
    read_table,
    write_dispatch_dataset,
    write_series,
)
from .dispatch import DispatchError, read_prices, run_rolling, write_prices
from .forecast_engine import RollingConfig, error_series, run_backtest
from .lp_core import LpError
from .metrics import (
    SCHEMES,
    ErrorReport,
    error_report,
    improvement,
    ljung_box,
    recombined_mse,
    segment_report,
    summary_table,
    write_reports,
)
from .synthetic import SynthConfig, synth_load, two_cluster_dataset

log = logging.getLogger("dayahead")

EXIT_OK, EXIT_INPUT, EXIT_SOLVE, EXIT_INTERNAL = 0, 2, 3, 4
OUTPUT_ENV = "DAYAHEAD_OUTPUT_DIR"
DAY = pd.Timedelta(days=1)


class InternalError(Exception):
    """Invariant breach inside the pipeline (exit status 4)."""


# --- config handling ------------------------------------------------------------

def read_config(path) -> list[str]:
    """Translate a ``key = value`` file into argv tokens."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    argv = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            argv.append(flag)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            argv.extend([flag, value])
    return argv


def _config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _run_dir(args) -> Path:
    if args.out:
        d = Path(args.out)
    elif os.environ.get(OUTPUT_ENV):
        d = Path(os.environ[OUTPUT_ENV]) / args.command
    else:
        d = Path("runs") / args.command
    d.mkdir(parents=True, exist_ok=True)
    return d


def _manifest(run_dir: Path, args, outputs: list[Path]) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    manifest = {
        "command": args.command,
        "version": __version__,
        "config": cfg,
        "config_hash": _config_hash(cfg),
        "outputs": sorted(str(Path(p).relative_to(run_dir)) for p in outputs),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _require(*paths):
    for p in paths:
        if p is not None and not Path(p).exists():
            raise DataError(f"input not found: {p}")


def _day(text):
    return None if text is None else pd.Timestamp(text).normalize()


# --- load series helpers ----------------------------------------------------------

def _load_pair(args) -> tuple[TimeSeries, TimeSeries]:
    if args.load:
        _require(args.load)
        actual = read_series(args.load, args.actual_column)
        tso = read_series(args.load, args.tso_column)
    else:
        if not (args.actual and args.tso):
            raise DataError("give --load, or both --actual and --tso")
        _require(args.actual, args.tso)
        actual = read_series(args.actual, args.actual_column)
        tso = read_series(args.tso, args.tso_column)
    actual, tso = align(actual, tso)
    return fill_gaps(actual), fill_gaps(tso)


def _read_any(path, column=None, zone=None) -> TimeSeries:
    """A series from a wide table, a price file, or an improved-load file."""
    _require(path)
    with Path(path).open() as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    if "zone" in header and "price" in header:
        return read_prices(path, zone)
    index, cols = read_table(path)
    if column is None:
        for guess in ("lhat_star", "value", "price", "actual"):
            if guess in cols:
                column = guess
                break
        else:
            column = next(iter(cols))
    if column not in cols:
        raise DataError(f"{path}: column {column!r} not found")
    unit = "EUR_per_MWh" if "price" in column else "MWh"
    return TimeSeries(index[0], cols[column], unit)


# --- commands -------------------------------------------------------------------------

def cmd_synth(args) -> int:
    run_dir = _run_dir(args)
    cfg = SynthConfig(seed=args.seed, start=args.start, days=args.days,
                      base_load=args.base_load, bias_amplitude=args.bias_amplitude,
                      noise_sigma=args.noise_sigma, phi1=args.phi1, phi24=args.phi24,
                      omega1=args.omega1, omega24=args.omega24)
    actual, tso, errors = synth_load(cfg)
    load_path = run_dir / "load.csv"
    write_series(load_path, {"actual": actual, "tso": tso})
    ds = two_cluster_dataset(tso, zone=args.zone, step_quantile=args.step_quantile)
    ds_dir = run_dir / "dataset"
    write_dispatch_dataset(ds, ds_dir)
    outputs = [load_path, *sorted(ds_dir.iterdir())]
    _manifest(run_dir, args, outputs)
    print(f"wrote {len(actual)} hours to {load_path} and toy dataset to {ds_dir}")
    return EXIT_OK


def cmd_improve_load(args) -> int:
    cfg = RollingConfig(window_len=args.window_hours, decision_hour=args.decision_hour,
                        burn=args.burn, ar_cross_sign=-1.0 if not args.plus_cross_sign else 1.0)
    actual, tso = _load_pair(args)
    run_dir = _run_dir(args)
    first = _day(args.first_day) or cfg.first_day(actual.start)
    last = _day(args.last_day) or actual.end.floor("D") - DAY
    if last < first:
        raise DataError(f"empty backtest range {first.date()}..{last.date()}")
    result = run_backtest(actual, tso, (first, last), cfg, jobs=args.jobs)
    if not np.array_equal(result.lhat_star.values, result.lhat.values + result.ehat.values):
        raise InternalError("improved forecast violates lhat_star = lhat + ehat")
    if len(result.fit_log) * 24 != len(result.lhat_star):
        raise InternalError("fit log does not have one entry per day")
    load_path, log_path = result.write(run_dir)

    act = actual.window(result.lhat.start, result.lhat.end)
    ref = error_report(result.lhat, act)
    new = error_report(result.lhat_star, act)
    lines = [f"backtest {first.date()} .. {last.date()} (window {cfg.window_len} h)",
             summary_table(ref, new, "TSO", "improved")]
    errs = error_series(actual, tso)
    try:
        lb = ljung_box(errs, lags=min(args.lb_lags, len(errs) - 1))
        lines.append(f"Ljung-Box on TSO errors: Q={lb.statistic:.1f} (lags {lb.lags}), "
                     f"p={lb.pvalue:.3g}, reject={lb.reject}")
    except DataError as exc:
        lines.append(f"Ljung-Box skipped: {exc}")
    n_fallback = sum(f.fallback for f in result.fit_log)
    n_bad = sum(not f.converged for f in result.fit_log)
    lines.append(f"days: {len(result.fit_log)}, non-converged fits: {n_bad}, fallbacks: {n_fallback}")
    summary = "\n".join(lines)
    summary_path = run_dir / "summary.txt"
    summary_path.write_text(summary + "\n")
    report_path = write_reports(run_dir / "error_reports.csv", {"tso": ref, "improved": new})
    print(summary)
    _manifest(run_dir, args, [load_path, log_path, summary_path, report_path])
    return EXIT_OK


def cmd_run_dispatch(args) -> int:
    _require(args.dataset)
    ds = read_dispatch_dataset(args.dataset, psp_longterm_share=args.psp_longterm_share)
    improved = None
    if args.source == "improved":
        if not args.improved:
            raise DataError("--source improved needs --improved FILE")
        _require(args.improved)
        improved = read_series(args.improved, args.improved_column)
    run_dir = _run_dir(args)
    # default range: every day whose 72 h horizon fits the dataset (and the improved series)
    lo = ds.index[0].ceil("D") + DAY
    hi = (ds.index[-1] + pd.Timedelta(hours=1)).floor("D") - 2 * DAY
    if improved is not None:
        lo = max(lo, improved.start.ceil("D"))
        hi = min(hi, improved.end.floor("D") - DAY)
    first = _day(args.first_day) or lo
    last = _day(args.last_day) or hi
    if last < first:
        raise DataError(f"empty dispatch range {first.date()}..{last.date()}")
    export_dir = run_dir / "lp" if args.export_lp else None
    prices = run_rolling(ds, (first, last), args.source, improved, args.zone,
                         cold_start=args.cold_start,
                         boundary_in_power_units=args.boundary_in_power_units,
                         export_dir=export_dir, jobs=args.jobs)
    for zone, s in prices.items():
        if np.any(s.values > ds.voll + 1e-6):
            raise InternalError(f"price above voll in zone {zone}")
    tag = args.tag or args.source
    path = write_prices(run_dir / f"prices_{tag}.csv", prices)
    outputs = [path] + (sorted(export_dir.iterdir()) if export_dir else [])
    _manifest(run_dir, args, outputs)
    print(f"{tag}: {len(next(iter(prices.values())))} hourly prices "
          f"for {first.date()} .. {last.date()} -> {path}")
    return EXIT_OK


def _fmt_report_rows(name, r: ErrorReport) -> str:
    return f"{name:<12}{r.mse:>16,.2f}{r.rmse:>12,.2f}{r.mae:>12,.2f}{r.n:>8d}"


def cmd_evaluate(args) -> int:
    actual = _read_any(args.actual, args.actual_column, args.zone)
    pred = _read_any(args.pred, args.pred_column, args.zone)
    ref = _read_any(args.ref, args.ref_column, args.zone) if args.ref else None
    series = [actual, pred] + ([ref] if ref is not None else [])
    series = align(*series)
    actual, pred = series[0], series[1]
    ref = series[2] if ref is not None else None
    run_dir = _run_dir(args)
    outputs = []
    reports = {"pred": error_report(pred, actual)}
    lines = [f"{'series':<12}{'MSE':>16}{'RMSE':>12}{'MAE':>12}{'n':>8}",
             _fmt_report_rows("pred", reports["pred"])]
    if ref is not None:
        reports["ref"] = error_report(ref, actual)
        lines.append(_fmt_report_rows("ref", reports["ref"]))
        pct = improvement(reports["ref"], reports["pred"])
        for k, m in enumerate(("mse", "rmse", "mae"), start=1):
            lines.append(f"Reduction [{k}] {m.upper():<5}{pct[m]:>10.2f}%")
        imp_path = run_dir / "improvement.csv"
        imp_path.write_text("metric,pct_improvement\n"
                            + "".join(f"{m},{pct[m]!r}\n" for m in ("mse", "rmse", "mae")))
        outputs.append(imp_path)
        schemes = SCHEMES if args.segments == "all" else tuple(args.segments.split(","))
        for scheme in schemes:
            if scheme not in SCHEMES:
                raise DataError(f"unknown segmentation {scheme!r} (choose from {', '.join(SCHEMES)})")
            seg = segment_report(ref, pred, actual, scheme)
            for side in (seg.reference, seg.candidate):
                if abs(recombined_mse(side) - (reports["ref"] if side is seg.reference else reports["pred"]).mse) > 1e-9 * (1 + reports["ref"].mse):
                    raise InternalError(f"segment MSEs of {scheme} do not recombine")
            outputs.append(seg.write_long(run_dir / f"segments_{scheme}.csv"))
            lines.append(f"\n[{scheme}] % MSE improvement")
            for s in seg.segments:
                lines.append(f"  {s:<10}{seg.pct_improvement[s]['mse']:>10.2f}"
                             f"   (n={seg.reference[s].n})")
    outputs.append(write_reports(run_dir / "error_reports.csv", reports))
    summary = "\n".join(lines)
    (run_dir / "summary.txt").write_text(summary + "\n")
    outputs.append(run_dir / "summary.txt")
    print(summary)
    _manifest(run_dir, args, outputs)
    return EXIT_OK


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dayahead", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.add_argument("--out", help="run directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel day-level workers")

    p = sub.add_parser("synth", help="generate synthetic load data and a toy dispatch dataset")
    common(p)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--start", default="2016-01-01")
    p.add_argument("--days", type=int, default=2 * 365)
    p.add_argument("--base-load", type=float, default=55_000.0)
    p.add_argument("--bias-amplitude", type=float, default=1000.0)
    p.add_argument("--noise-sigma", type=float, default=600.0)
    p.add_argument("--phi1", type=float, default=0.8)
    p.add_argument("--phi24", type=float, default=0.5)
    p.add_argument("--omega1", type=float, default=-0.3)
    p.add_argument("--omega24", type=float, default=0.2)
    p.add_argument("--zone", default="DE")
    p.add_argument("--step-quantile", type=float, default=0.7,
                   help="demand quantile at which the cheap cluster runs out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("improve-load", help="rolling improvement of the TSO load forecast")
    common(p)
    p.add_argument("--load", help="file with actual and TSO columns")
    p.add_argument("--actual", help="actual-load file (alternative to --load)")
    p.add_argument("--tso", help="TSO-forecast file (alternative to --load)")
    p.add_argument("--actual-column", default="actual")
    p.add_argument("--tso-column", default="tso")
    p.add_argument("--window-hours", type=int, default=8760)
    p.add_argument("--decision-hour", type=int, default=12)
    p.add_argument("--burn", type=int, default=0)
    p.add_argument("--first-day")
    p.add_argument("--last-day")
    p.add_argument("--lb-lags", type=int, default=168)
    p.add_argument("--plus-cross-sign", action="store_true",
                   help="use +phi1*phi24 on the lag-25 AR term")
    p.set_defaults(func=cmd_improve_load)

    p = sub.add_parser("run-dispatch", help="rolling dispatch LP and price extraction")
    common(p)
    p.add_argument("--dataset", required=False, help="dispatch dataset directory")
    p.add_argument("--source", choices=("tso", "improved"), default="tso")
    p.add_argument("--improved", help="improved_load.csv for --source improved")
    p.add_argument("--improved-column", default="lhat_star",
                   help="column of --improved holding the replacement demand")
    p.add_argument("--tag", help="suffix of the price file (default: the source)")
    p.add_argument("--zone", help="zone whose demand is replaced (default: first zone)")
    p.add_argument("--first-day")
    p.add_argument("--last-day")
    p.add_argument("--export-lp", action="store_true", help="write one MPS file per day")
    p.add_argument("--cold-start", action="store_true")
    p.add_argument("--boundary-in-power-units", action="store_true")
    p.add_argument("--psp-longterm-share", type=float, default=0.3)
    p.set_defaults(func=cmd_run_dispatch)

    p = sub.add_parser("evaluate", help="error measures and segmented breakdowns")
    common(p)
    p.add_argument("--pred", required=False, help="candidate prediction file")
    p.add_argument("--ref", help="reference prediction file")
    p.add_argument("--actual", required=False, help="actual values file")
    p.add_argument("--pred-column")
    p.add_argument("--ref-column")
    p.add_argument("--actual-column")
    p.add_argument("--zone", help="zone for price files")
    p.add_argument("--segments", default="all",
                   help=f"comma list of {', '.join(SCHEMES)} or 'all'")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            cfg_argv = read_config(args.config)
            args = parser.parse_args([args.command, *cfg_argv, *argv[argv.index(args.command) + 1:]])
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "run-dispatch" and not args.dataset:
            raise DataError("--dataset is required")
        if args.command == "evaluate" and not (args.pred and args.actual):
            raise DataError("--pred and --actual are required")
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DispatchError, LpError) as exc:
        print(f"solve error: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
