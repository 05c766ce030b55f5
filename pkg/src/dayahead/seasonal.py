"""Hour-of-week seasonal component of the load forecast error."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data_io import HOUR, AlignmentError, DataError, InvariantError, TimeSeries


class UndefinedBucketError(DataError):
    """An hour-of-week bucket had no observations in the estimation window."""


def how_bucket(timestamps) -> np.ndarray:
    """0-based hour-of-week bucket: 24 * (weekday, Monday=0) + hour-of-day."""
    idx = pd.DatetimeIndex(timestamps)
    return (idx.dayofweek * 24 + idx.hour).to_numpy()


def series_buckets(s: TimeSeries) -> np.ndarray:
    first = int(how_bucket([s.start])[0])
    return (first + np.arange(len(s))) % 168


@dataclass(frozen=True)
class HourOfWeekProfile:
    """Mean error per (weekday d, hour h); arrays are shaped (7, 24) as [d-1, h-1]."""

    means: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if self.means.shape != (7, 24) or self.counts.shape != (7, 24):
            raise InvariantError("profile tables must be 7x24")

    def mean(self, h: int, d: int) -> float:
        """Mean for hour ``h`` in 1..24 of weekday ``d`` in 1..7 (Monday = 1)."""
        if self.counts[d - 1, h - 1] == 0:
            raise UndefinedBucketError(f"bucket (d={d}, h={h}) has no observations")
        return float(self.means[d - 1, h - 1])

    @property
    def flat_means(self) -> np.ndarray:
        return self.means.reshape(168)

    @property
    def flat_counts(self) -> np.ndarray:
        return self.counts.reshape(168)

    @property
    def defined(self) -> np.ndarray:
        return self.counts > 0

    def lookup(self, buckets: np.ndarray) -> np.ndarray:
        buckets = np.asarray(buckets)
        undefined = self.flat_counts[buckets] == 0
        if undefined.any():
            b = int(buckets[np.argmax(undefined)])
            raise UndefinedBucketError(f"bucket (d={b // 24 + 1}, h={b % 24 + 1}) has no observations")
        return self.flat_means[buckets]

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["d", "h", "mean", "count"])
            for d in range(7):
                for h in range(24):
                    c = int(self.counts[d, h])
                    w.writerow([d + 1, h + 1, repr(float(self.means[d, h])) if c else "", c])

    @classmethod
    def from_csv(cls, path) -> "HourOfWeekProfile":
        means = np.full((7, 24), np.nan)
        counts = np.zeros((7, 24), dtype=int)
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                d, h = int(row["d"]) - 1, int(row["h"]) - 1
                counts[d, h] = int(row["count"])
                if row["mean"]:
                    means[d, h] = float(row["mean"])
        return cls(means, counts)


def estimate_profile(errors: TimeSeries, window_end, window_len: int) -> HourOfWeekProfile:
    """Bucket means over the ``window_len`` hours ending just before ``window_end``."""
    if window_len <= 0 or window_len % 24:
        raise InvariantError(f"window_len={window_len} must be a positive multiple of 24")
    window_end = pd.Timestamp(window_end)
    start = window_end - window_len * HOUR
    if start < errors.start or window_end > errors.end:
        raise AlignmentError(
            f"window [{start}, {window_end}) exceeds series [{errors.start}, {errors.end})"
        )
    w = errors.window(start, window_end)
    if np.isnan(w.values).any():
        raise DataError("estimation window contains missing values")
    buckets = series_buckets(w)
    counts = np.bincount(buckets, minlength=168)
    sums = np.bincount(buckets, weights=w.values, minlength=168)
    means = np.full(168, np.nan)
    ok = counts > 0
    means[ok] = sums[ok] / counts[ok]
    return HourOfWeekProfile(means.reshape(7, 24), counts.reshape(7, 24))


def seasonal_component(profile: HourOfWeekProfile, t) -> float:
    t = pd.Timestamp(t)
    return profile.mean(t.hour + 1, t.dayofweek + 1)


def seasonal_values(profile: HourOfWeekProfile, start, n: int) -> np.ndarray:
    """Seasonal component for ``n`` consecutive hours from ``start``."""
    first = int(how_bucket([pd.Timestamp(start)])[0])
    return profile.lookup((first + np.arange(n)) % 168)


def deseasonalize(errors: TimeSeries, profile: HourOfWeekProfile) -> TimeSeries:
    return errors.with_values(errors.values - profile.lookup(series_buckets(errors)))
