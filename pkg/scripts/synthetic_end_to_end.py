#!/usr/bin/env python3
"""Synthetic end-to-end run: synth -> improve-load -> dispatch (three demand sources) -> evaluate.

Writes everything under one directory (default ``runs/e2e``) and prints the
load and price summaries.
"""
import argparse
import sys
from pathlib import Path

import pandas as pd

from dayahead.cli import main as dayahead


def step(*argv):
    code = dayahead([str(a) for a in argv])
    if code:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/e2e")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--days", type=int, default=365 + 100, help="days of synthetic history")
    ap.add_argument("--dispatch-days", type=int, default=60)
    ap.add_argument("--window-hours", type=int, default=8760)
    args = ap.parse_args()
    out = Path(args.out)

    step("synth", "--seed", args.seed, "--days", args.days, "--out", out / "synth")
    load = out / "synth" / "load.csv"
    start = pd.read_csv(load, nrows=1)["timestamp"].iloc[0]
    first = (pd.Timestamp(start) + pd.Timedelta(hours=args.window_hours)).normalize() + pd.Timedelta(days=1)
    last = first + pd.Timedelta(days=args.dispatch_days + 1)
    step("improve-load", "--load", load, "--window-hours", args.window_hours,
         "--first-day", first.date(), "--last-day", last.date(), "--out", out / "improve")

    d_first, d_last = first + pd.Timedelta(days=1), last - pd.Timedelta(days=1)
    common = ["--dataset", out / "synth" / "dataset", "--first-day", d_first.date(), "--last-day", d_last.date()]
    step("run-dispatch", *common, "--source", "tso", "--out", out / "dispatch")
    step("run-dispatch", *common, "--source", "improved", "--improved", out / "improve" / "improved_load.csv",
         "--out", out / "dispatch")
    # "true" prices: the same model driven by realised load
    step("run-dispatch", *common, "--source", "improved", "--improved", load, "--improved-column", "actual",
         "--tag", "actual", "--out", out / "dispatch")
    step("evaluate", "--pred", out / "dispatch" / "prices_improved.csv", "--ref", out / "dispatch" / "prices_tso.csv",
         "--actual", out / "dispatch" / "prices_actual.csv", "--out", out / "evaluate")


if __name__ == "__main__":
    main()
