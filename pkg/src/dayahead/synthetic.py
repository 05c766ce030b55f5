"""Deterministic synthetic load / TSO-forecast pairs and toy dispatch datasets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data_io import Cluster, DispatchDataset, TimeSeries
from .sarma import SarmaParams, simulate
from .seasonal import series_buckets


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    start: str = "2016-01-01"
    days: int = 2 * 365
    base_load: float = 55_000.0
    bias_amplitude: float = 1000.0
    noise_sigma: float = 600.0
    phi1: float = 0.8
    phi24: float = 0.5
    omega1: float = -0.3
    omega24: float = 0.2


def weekly_bias_pattern() -> np.ndarray:
    """168-entry pattern of unit scale: underprediction on weekdays, over on weekends."""
    h = np.arange(24)
    daily = 0.6 + 0.4 * np.cos(2 * np.pi * (h - 7) / 12.0) ** 2
    week = np.concatenate([daily * w for w in (1.0, 1.2, 1.2, 1.0, 0.9, -0.8, -0.5)])
    return week / np.max(np.abs(week))


def load_profile(index: pd.DatetimeIndex, base: float, rng: np.random.Generator) -> np.ndarray:
    hour = index.hour.to_numpy()
    dow = index.dayofweek.to_numpy()
    doy = index.dayofyear.to_numpy()
    daily = 1.0 + 0.12 * np.sin(2 * np.pi * (hour - 9) / 24.0) + 0.05 * np.sin(4 * np.pi * hour / 24.0)
    weekly = np.where(dow == 5, 0.88, np.where(dow == 6, 0.82, 1.0))
    yearly = 1.0 + 0.08 * np.cos(2 * np.pi * (doy - 15) / 365.25)
    wiggle = simulate(SarmaParams(phi1=0.95), rng.normal(0.0, 0.01, len(index)))
    return base * daily * weekly * yearly * (1.0 + wiggle)


def synth_load(cfg: SynthConfig = SynthConfig()) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    """(actual, tso_forecast, errors) with errors = weekly bias + SARMA noise."""
    rng = np.random.default_rng(cfg.seed)
    index = pd.date_range(cfg.start, periods=cfg.days * 24, freq="h")
    actual = load_profile(index, cfg.base_load, rng)
    params = SarmaParams(0.0, cfg.phi1, cfg.phi24, cfg.omega1, cfg.omega24)
    noise = simulate(params, rng.normal(0.0, cfg.noise_sigma, len(index)))
    errs = TimeSeries(index[0], np.zeros(len(index)))
    bias = cfg.bias_amplitude * weekly_bias_pattern()[series_buckets(errs)]
    errors = bias + noise
    return (
        TimeSeries(index[0], actual),
        TimeSeries(index[0], actual - errors),
        TimeSeries(index[0], errors),
    )


def two_cluster_dataset(demand: TimeSeries, zone: str = "DE", step_quantile: float = 0.7,
                        cheap_cost: float = 30.0, expensive_cost: float = 70.0,
                        g_min: float = 0.0, sc: float = 0.0, voll: float = 3000.0) -> DispatchDataset:
    """One zone, a cheap base cluster sized at a demand quantile and an expensive peaker."""
    d = demand.values
    base_cap = float(np.quantile(d, step_quantile))
    peak_cap = float(1.1 * d.max() - base_cap)
    vc_ml = lambda vc: vc * (1.25 if g_min > 0 else 1.0)
    clusters = [
        Cluster("base", zone, "thermal", base_cap, g_min, cheap_cost, vc_ml(cheap_cost), sc),
        Cluster("peak", zone, "thermal", peak_cap, g_min, expensive_cost, vc_ml(expensive_cost), sc),
    ]
    return DispatchDataset(index=demand.index, zones=[zone], clusters=clusters,
                           demand={zone: np.asarray(d, dtype=float)}, voll=voll).validate()
