#!/usr/bin/env python3
"""Compare backtest accuracy across estimation-window lengths on synthetic data.

Three months, six months (182 days, the nearest whole-day length) and one
year, evaluated on the same target days. Prints one row per window and
writes ``window_comparison.csv``.
"""
import argparse
import csv
from pathlib import Path

import pandas as pd

from dayahead.forecast_engine import RollingConfig, run_backtest
from dayahead.metrics import error_report, improvement
from dayahead.synthetic import SynthConfig, synth_load

WINDOWS = (2160, 4368, 8760)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--eval-days", type=int, default=180)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/windows")
    args = ap.parse_args()

    actual, tso, _ = synth_load(SynthConfig(seed=args.seed, days=366 + args.eval_days + 2))
    first = RollingConfig(window_len=max(WINDOWS)).first_day(actual.start)
    days = (first, first + pd.Timedelta(days=args.eval_days - 1))
    rows = []
    for w in WINDOWS:
        res = run_backtest(actual, tso, days, RollingConfig(window_len=w), jobs=args.jobs)
        act = actual.window(res.lhat.start, res.lhat.end)
        ref, new = error_report(res.lhat, act), error_report(res.lhat_star, act)
        pct = improvement(ref, new)
        rows.append({"window_hours": w, "tso_mse": ref.mse, "improved_mse": new.mse,
                     "improved_rmse": new.rmse, "improved_mae": new.mae,
                     "pct_mse": pct["mse"], "pct_rmse": pct["rmse"], "pct_mae": pct["mae"]})
        print(f"{w:>6} h  MSE {new.mse:14,.0f}  RMSE {new.rmse:9,.1f}  MAE {new.mae:9,.1f}"
              f"  impr. MSE {pct['mse']:6.2f}%  RMSE {pct['rmse']:6.2f}%")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "window_comparison.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
