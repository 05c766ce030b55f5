"""Error measures, improvements, Ljung-Box test and segmented breakdowns.

Errors are always ``actual - prediction``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from .data_io import AlignmentError, DataError, TimeSeries

METRICS = ("mse", "rmse", "mae")
SCHEMES = ("hour", "weekday", "peak", "daytype", "price-quantile")


class MetricsError(DataError):
    pass


@dataclass(frozen=True)
class ErrorReport:
    mse: float
    rmse: float
    mae: float
    mean: float
    median: float
    std: float
    q05: float
    q95: float
    min: float
    max: float
    n: int

    def as_dict(self) -> dict:
        return asdict(self)


def _check_aligned(pred: TimeSeries, actual: TimeSeries):
    if pred.start != actual.start or len(pred) != len(actual):
        raise AlignmentError(
            f"misaligned series: [{pred.start}, {pred.end}) vs [{actual.start}, {actual.end})"
        )
    if np.isnan(pred.values).any() or np.isnan(actual.values).any():
        raise MetricsError("series contain missing values")


def report_from_errors(e: np.ndarray) -> ErrorReport:
    e = np.asarray(e, dtype=float)
    if e.size == 0:
        raise MetricsError("empty error sample")
    mse = float(np.mean(e * e))
    return ErrorReport(
        mse=mse, rmse=math.sqrt(mse), mae=float(np.mean(np.abs(e))),
        mean=float(np.mean(e)), median=float(np.median(e)),
        std=float(np.std(e, ddof=1)) if e.size > 1 else 0.0,
        q05=float(np.quantile(e, 0.05)), q95=float(np.quantile(e, 0.95)),
        min=float(e.min()), max=float(e.max()), n=int(e.size),
    )


def error_report(pred: TimeSeries, actual: TimeSeries) -> ErrorReport:
    _check_aligned(pred, actual)
    return report_from_errors(actual.values - pred.values)


def improvement(ref: ErrorReport, new: ErrorReport) -> dict[str, float]:
    """Percentage reduction ``100 * (ref - new) / ref`` per metric."""
    out = {}
    for m in METRICS:
        r = getattr(ref, m)
        if r == 0:
            raise MetricsError(f"reference {m} is zero; improvement undefined")
        out[m] = 100.0 * (r - getattr(new, m)) / r
    return out


@dataclass(frozen=True)
class LjungBox:
    statistic: float
    pvalue: float
    critical: float
    lags: int
    reject: bool


def ljung_box(errors: TimeSeries | np.ndarray, lags: int = 168, alpha: float = 0.05) -> LjungBox:
    x = np.asarray(errors.values if isinstance(errors, TimeSeries) else errors, dtype=float)
    n = x.size
    if lags < 1 or n <= lags:
        raise MetricsError(f"need more than {lags} observations, have {n}")
    if np.ptp(x) == 0.0:
        raise MetricsError("constant series; autocorrelation undefined")
    x = x - x.mean()
    denom = float(x @ x)
    k = np.arange(1, lags + 1)
    acf = np.array([x[j:] @ x[:-j] for j in k]) / denom
    q = float(n * (n + 2) * np.sum(acf**2 / (n - k)))
    crit = float(stats.chi2.ppf(1.0 - alpha, lags))
    return LjungBox(q, float(stats.chi2.sf(q, lags)), crit, lags, q > crit)


# --- segmentation ---------------------------------------------------------------

@dataclass(frozen=True)
class PeakDefinition:
    """Peak hours are ``[start_hour, end_hour)`` on the listed weekdays (Monday = 0)."""

    start_hour: int = 8
    end_hour: int = 20
    weekdays: tuple[int, ...] = (0, 1, 2, 3, 4)


def segment_labels(index: pd.DatetimeIndex, scheme: str, actual: np.ndarray | None = None,
                   peak: PeakDefinition = PeakDefinition(), n_bins: int = 5) -> np.ndarray:
    if scheme == "hour":
        return np.array([f"h{h + 1:02d}" for h in index.hour])
    if scheme == "weekday":
        return np.array([f"d{d + 1}" for d in index.dayofweek])
    if scheme == "daytype":
        return np.where(index.dayofweek < 5, "weekday", "weekend")
    if scheme == "peak":
        on = np.isin(index.dayofweek, peak.weekdays) & (index.hour >= peak.start_hour) & (
            index.hour < peak.end_hour)
        return np.where(on, "peak", "offpeak")
    if scheme == "price-quantile":
        if actual is None:
            raise MetricsError("price-quantile segmentation needs actual values")
        labels = np.empty(len(index), dtype=object)
        years = index.year.to_numpy()
        for year in np.unique(years):
            pos = np.flatnonzero(years == year)
            order = pos[np.argsort(actual[pos], kind="stable")]
            for b, chunk in enumerate(np.array_split(order, n_bins)):
                labels[chunk] = f"{year}-q{b + 1}"
        return labels.astype(str)
    raise MetricsError(f"unknown segmentation scheme {scheme!r}")


@dataclass
class SegmentedReport:
    scheme: str
    segments: list[str]
    reference: dict[str, ErrorReport]
    candidate: dict[str, ErrorReport]
    pct_improvement: dict[str, dict[str, float]] = field(default_factory=dict)

    def rows(self):
        """Long-format (segment, series, metric, value) tuples."""
        for s in self.segments:
            for m in METRICS:
                yield s, "reference", m, getattr(self.reference[s], m)
                yield s, "candidate", m, getattr(self.candidate[s], m)
                yield s, "pct_improvement", m, self.pct_improvement[s].get(m, math.nan)

    def write_long(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scheme", "segment", "series", "metric", "value"])
            for row in self.rows():
                w.writerow([self.scheme, *row[:3], repr(float(row[3]))])
        return path


def segment_report(pred_a: TimeSeries, pred_b: TimeSeries, actual: TimeSeries, scheme: str,
                   peak: PeakDefinition = PeakDefinition()) -> SegmentedReport:
    """Per-segment reports for reference ``pred_a`` and candidate ``pred_b``."""
    _check_aligned(pred_a, actual)
    _check_aligned(pred_b, actual)
    labels = segment_labels(actual.index, scheme, actual.values, peak)
    segments = sorted(set(labels.tolist()))
    ea = actual.values - pred_a.values
    eb = actual.values - pred_b.values
    ref, cand, pct = {}, {}, {}
    for s in segments:
        mask = labels == s
        if not mask.any():
            raise MetricsError(f"empty segment {s!r}")
        ref[s] = report_from_errors(ea[mask])
        cand[s] = report_from_errors(eb[mask])
        pct[s] = {m: (100.0 * (getattr(ref[s], m) - getattr(cand[s], m)) / getattr(ref[s], m)
                      if getattr(ref[s], m) else math.nan) for m in METRICS}
    return SegmentedReport(scheme, segments, ref, cand, pct)


def recombined_mse(report: dict[str, ErrorReport]) -> float:
    total = sum(r.n for r in report.values())
    return sum(r.n * r.mse for r in report.values()) / total


def write_reports(path, reports: dict[str, ErrorReport]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(ErrorReport.__dataclass_fields__)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", *fields])
        for name, r in reports.items():
            w.writerow([name, *(repr(getattr(r, f)) for f in fields)])
    return path


def summary_table(ref: ErrorReport, new: ErrorReport, ref_name: str = "reference",
                  new_name: str = "improved") -> str:
    """Plain-text table of both reports and the percentage improvement."""
    pct = improvement(ref, new)
    lines = [f"{'':8}{ref_name:>18}{new_name:>18}{'% impr.':>10}"]
    for m in ("mean", "std", *METRICS):
        a, b = getattr(ref, m), getattr(new, m)
        tail = f"{pct[m]:>10.2f}" if m in pct else ""
        lines.append(f"{m:8}{a:>18,.2f}{b:>18,.2f}{tail}")
    lines.append(f"{'n':8}{ref.n:>18d}{new.n:>18d}")
    return "\n".join(lines)
