"""Daily rolling-window improvement of the TSO day-ahead load forecast.

For a target day D the forecast is made at ``decision_hour`` on day D-1.
Errors are observed up to ``decision_hour - 12`` hours after the start of
D-1 (with the default of 12 that is the last hour of D-2). The model is
re-estimated on the ``window_len`` hours ending there, errors are forecast
recursively up to the end of D, and the final 24 values correct the TSO
forecast for D.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import sarma
from .data_io import HOUR, AlignmentError, DataError, InvariantError, TimeSeries
from .seasonal import deseasonalize, estimate_profile, seasonal_values

log = logging.getLogger(__name__)

DAY = pd.Timedelta(days=1)


@dataclass(frozen=True)
class RollingConfig:
    window_len: int = 8760
    decision_hour: int = 12
    burn: int = 0
    ar_cross_sign: float = -1.0

    def __post_init__(self):
        if self.window_len < 168 or self.window_len % 24:
            raise InvariantError(
                f"window_len={self.window_len} must be >= 168 and a multiple of 24"
            )
        if not 1 <= self.decision_hour <= 24:
            raise InvariantError(f"decision_hour={self.decision_hour} outside 1..24")
        if self.burn < 0:
            raise InvariantError("burn must be non-negative")

    def window_end(self, day) -> pd.Timestamp:
        """First unobserved hour when forecasting ``day``."""
        decision_day = pd.Timestamp(day).normalize() - DAY
        return decision_day + (self.decision_hour - 12) * HOUR

    def first_day(self, series_start) -> pd.Timestamp:
        """Earliest target day with a full estimation window after the burn-in hours."""
        start = pd.Timestamp(series_start)
        origin = start + self.burn * HOUR
        day = (origin + self.window_len * HOUR).normalize()
        while self.window_end(day) - self.window_len * HOUR < origin:
            day += DAY
        return day


@dataclass(frozen=True)
class DayFit:
    day: pd.Timestamp
    params: sarma.SarmaParams
    converged: bool
    fallback: bool = False
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class DayForecast:
    day: pd.Timestamp
    lhat: np.ndarray
    ehat: np.ndarray
    lhat_star: np.ndarray
    fit: DayFit


@dataclass
class ImprovedForecast:
    lhat: TimeSeries
    ehat: TimeSeries
    lhat_star: TimeSeries
    fit_log: list[DayFit] = field(default_factory=list)

    def write(self, directory) -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        load_path, log_path = d / "improved_load.csv", d / "fit_log.csv"
        with load_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "lhat", "ehat", "lhat_star"])
            for ts, a, b, c in zip(self.lhat.index, self.lhat.values, self.ehat.values,
                                   self.lhat_star.values):
                w.writerow([ts.isoformat(), repr(float(a)), repr(float(b)), repr(float(c))])
        with log_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "phi0", "phi1", "phi24", "omega1", "omega24", "sigma2",
                        "converged", "fallback", "flags"])
            for f in self.fit_log:
                p = f.params
                w.writerow([f.day.date().isoformat(), repr(p.phi0), repr(p.phi1), repr(p.phi24),
                            repr(p.omega1), repr(p.omega24), repr(p.sigma2),
                            int(f.converged), int(f.fallback), ";".join(f.flags)])
        return load_path, log_path


def error_series(actual: TimeSeries, tso: TimeSeries) -> TimeSeries:
    """Forecast error actual - forecast on the common index."""
    if actual.start != tso.start or len(actual) != len(tso):
        raise AlignmentError("actual and TSO series must share one hourly index")
    return actual.with_values(actual.values - tso.values)


def improve_day(errors: TimeSeries, tso_forecast: TimeSeries, day, cfg: RollingConfig) -> DayForecast:
    """Improved forecast for the 24 hours of ``day``."""
    day = pd.Timestamp(day).normalize()
    end = cfg.window_end(day)
    start = end - cfg.window_len * HOUR
    if start < errors.start or end > errors.end:
        raise AlignmentError(
            f"{day.date()}: estimation window [{start}, {end}) not covered by error history"
        )
    target_end = day + DAY
    horizon = int((target_end - end) / HOUR)

    window = errors.window(start, end)
    profile = estimate_profile(errors, end, cfg.window_len)
    rc = deseasonalize(window, profile)
    sc = seasonal_values(profile, end, horizon)
    try:
        sfit = sarma.fit(rc, ar_cross_sign=cfg.ar_cross_sign)
        state = sarma.state_from(sfit.params, rc)
        rc_hat = sarma.forecast(sfit.params, state, horizon)
        fit = DayFit(day, sfit.params, sfit.converged, False, sfit.flags)
        if not np.all(np.isfinite(rc_hat)):
            raise sarma.SarmaError("non-finite forecast")
    except (sarma.SarmaError, InvariantError, FloatingPointError) as exc:
        log.warning("%s: SARMA step failed (%s); using seasonal component only", day.date(), exc)
        rc_hat = np.zeros(horizon)
        fit = DayFit(day, sarma.SarmaParams(ar_cross_sign=cfg.ar_cross_sign), False, True,
                     ("fallback",))
    ehat = (sc + rc_hat)[-24:]
    lhat = tso_forecast.window(day, target_end).values
    return DayForecast(day, lhat.copy(), ehat, lhat + ehat, fit)


def _day_range(days) -> list[pd.Timestamp]:
    if isinstance(days, tuple) and len(days) == 2:
        return list(pd.date_range(pd.Timestamp(days[0]).normalize(),
                                  pd.Timestamp(days[1]).normalize(), freq="D"))
    return [pd.Timestamp(d).normalize() for d in days]


def _improve_one(args):
    return improve_day(*args)


def run_backtest(actual: TimeSeries, tso: TimeSeries, days, cfg: RollingConfig,
                 jobs: int = 1) -> ImprovedForecast:
    """Apply ``improve_day`` to every day; ``days`` is a list or an inclusive (first, last) pair."""
    errors = error_series(actual, tso)
    if np.isnan(errors.values).any():
        raise DataError("missing values in load series; fill gaps first")
    day_list = _day_range(days)
    if not day_list:
        raise DataError("empty day range")
    if any(b - a != DAY for a, b in zip(day_list, day_list[1:])):
        raise DataError("backtest days must be consecutive")
    earliest = cfg.first_day(actual.start)
    if day_list[0] < earliest:
        raise AlignmentError(
            f"range starts {day_list[0].date()} but the first day with a full "
            f"window is {earliest.date()}"
        )
    tasks = [(errors, tso, d, cfg) for d in day_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_improve_one, tasks))
    else:
        results = [_improve_one(t) for t in tasks]
    start = day_list[0]
    cat = lambda attr: np.concatenate([getattr(r, attr) for r in results])
    return ImprovedForecast(
        lhat=TimeSeries(start, cat("lhat"), tso.unit),
        ehat=TimeSeries(start, cat("ehat"), tso.unit),
        lhat_star=TimeSeries(start, cat("lhat_star"), tso.unit),
        fit_log=[r.fit for r in results],
    )


def read_improved(path) -> ImprovedForecast:
    from .data_io import read_table

    index, cols = read_table(path)
    for name in ("lhat", "ehat", "lhat_star"):
        if name not in cols:
            raise DataError(f"{path}: missing column {name!r}")
    ts = lambda name: TimeSeries(index[0], cols[name])
    return ImprovedForecast(ts("lhat"), ts("ehat"), ts("lhat_star"))
