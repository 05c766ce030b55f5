"""Hourly time series and dispatch dataset I/O.

All timestamps are naive UTC, hourly, DST-free. Series files are delimited
text with a header row ``timestamp,<name>[,<name>...]``; a missing value is
an empty cell.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

UNITS = ("MWh", "EUR_per_MWh", "MW", "fraction")
HOUR = pd.Timedelta(hours=1)
WEEK_HOURS = 168


class DataError(Exception):
    """Base class for input-data problems (CLI exit status 2)."""


class MalformedTimestampError(DataError):
    pass


class NonMonotoneIndexError(DataError):
    pass


class DuplicateHourError(DataError):
    pass


class GapInIndexError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class UnfillableGapError(DataError):
    pass


class ResolutionError(DataError):
    """A table references a zone or cluster that does not exist."""


class InvariantError(DataError):
    pass


class AlignmentError(DataError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    start: pd.Timestamp
    values: np.ndarray
    unit: str = "MWh"

    def __post_init__(self):
        start = pd.Timestamp(self.start)
        if start.tzinfo is not None:
            start = start.tz_convert("UTC").tz_localize(None)
        if start != start.floor("h"):
            raise MalformedTimestampError(f"series start {start} is not hour-aligned")
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise InvariantError("series must be one-dimensional and non-empty")
        if self.unit not in UNITS:
            raise InvariantError(f"unknown unit {self.unit!r}")
        values.setflags(write=False)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def index(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=len(self), freq="h")

    @property
    def end(self) -> pd.Timestamp:
        """One hour past the last timestamp."""
        return self.start + len(self) * HOUR

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())

    def position(self, ts) -> int:
        delta = pd.Timestamp(ts) - self.start
        pos, rem = divmod(delta, HOUR)
        if rem:
            raise MalformedTimestampError(f"{ts} is not on the hourly grid")
        return int(pos)

    def window(self, start, end) -> "TimeSeries":
        """Sub-series covering ``[start, end)``; raises if outside the series."""
        i, j = self.position(start), self.position(end)
        if i < 0 or j > len(self) or j <= i:
            raise AlignmentError(
                f"window [{start}, {end}) outside series [{self.start}, {self.end})"
            )
        return TimeSeries(pd.Timestamp(start), self.values[i:j], self.unit)

    def with_values(self, values) -> "TimeSeries":
        return replace(self, values=np.asarray(values, dtype=float))

    def to_pandas(self, name: str | None = None) -> pd.Series:
        return pd.Series(self.values, index=self.index, name=name)

    @classmethod
    def from_pandas(cls, s: pd.Series, unit: str = "MWh") -> "TimeSeries":
        idx = pd.DatetimeIndex(s.index)
        _check_hourly(list(idx))
        return cls(idx[0], s.to_numpy(dtype=float), unit)


def _parse_timestamp(text: str, row: int) -> pd.Timestamp:
    try:
        ts = pd.Timestamp(datetime.fromisoformat(text.strip()))
    except ValueError as exc:
        raise MalformedTimestampError(f"row {row}: malformed timestamp {text!r}") from exc
    if ts.tzinfo is not None:
        ts = ts.tz_convert("UTC").tz_localize(None)
    if ts != ts.floor("h"):
        raise MalformedTimestampError(f"row {row}: timestamp {text!r} not on the hour")
    return ts


def _parse_value(text: str, row: int, path) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError as exc:
        raise DataError(f"{path}: row {row}: cannot parse number {text!r}") from exc


def _check_hourly(stamps, rows=None):
    # ordering problems take precedence over gaps they would otherwise cause
    for k in range(1, len(stamps)):
        row = rows[k] if rows else k
        step = stamps[k] - stamps[k - 1]
        if step == pd.Timedelta(0):
            raise DuplicateHourError(f"row {row}: duplicate hour {stamps[k].isoformat()}")
        if step < pd.Timedelta(0):
            raise NonMonotoneIndexError(f"row {row}: timestamp {stamps[k].isoformat()} goes backwards")
    for k in range(1, len(stamps)):
        row = rows[k] if rows else k
        if stamps[k] - stamps[k - 1] != HOUR:
            raise GapInIndexError(
                f"row {row}: gap in hourly index after {stamps[k - 1].isoformat()}"
            )


def read_table(path) -> tuple[pd.DatetimeIndex, dict[str, np.ndarray]]:
    """Read a wide hourly table ``timestamp,<col>...`` into (index, columns)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[0] != "timestamp":
            raise MissingColumnError(f"{path}: first column must be 'timestamp'")
        stamps, rows, cells = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            rec = rec + [""] * (len(header) - len(rec))
            stamps.append(_parse_timestamp(rec[0], lineno))
            rows.append(lineno)
            cells.append([_parse_value(c, lineno, path) for c in rec[1 : len(header)]])
    if not stamps:
        raise DataError(f"{path}: no data rows")
    _check_hourly(stamps, rows)
    data = np.array(cells, dtype=float).reshape(len(stamps), len(header) - 1)
    index = pd.DatetimeIndex(stamps)
    return index, {name: data[:, k].copy() for k, name in enumerate(header[1:])}


def read_series(path, column: str, unit: str = "MWh") -> TimeSeries:
    index, cols = read_table(path)
    if column not in cols:
        raise MissingColumnError(f"{path}: column {column!r} not found (have {sorted(cols)})")
    return TimeSeries(index[0], cols[column], unit)


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_table(path, index, columns: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *names])
        for k, ts in enumerate(index):
            w.writerow([pd.Timestamp(ts).isoformat(), *(_fmt(columns[n][k]) for n in names)])


def write_series(path, series: TimeSeries | dict[str, TimeSeries], column: str = "value") -> None:
    """Write one series, or several aligned series keyed by column name."""
    if isinstance(series, TimeSeries):
        series = {column: series}
    first = next(iter(series.values()))
    for s in series.values():
        if s.start != first.start or len(s) != len(first):
            raise AlignmentError("series written together must share one index")
    write_table(path, first.index, {k: s.values for k, s in series.items()})


def fill_gaps(s: TimeSeries) -> TimeSeries:
    """Replace each missing value by the mean of the same hour one week before and after.

    Falls back to the single available neighbour. Neighbours are read from the
    original series, so filled values never feed other fills.
    """
    v = s.values
    missing = np.flatnonzero(np.isnan(v))
    if missing.size == 0:
        return s
    out = v.copy()
    n = v.size
    for t in missing:
        nb = [v[k] for k in (t - WEEK_HOURS, t + WEEK_HOURS) if 0 <= k < n and not np.isnan(v[k])]
        if not nb:
            ts = (s.start + int(t) * HOUR).isoformat()
            raise UnfillableGapError(f"missing value at {ts} has no week-neighbour to fill from")
        out[t] = sum(nb) / len(nb)
    return s.with_values(out)


def align(*series: TimeSeries) -> list[TimeSeries]:
    """Restrict series to their common hourly span."""
    start = max(s.start for s in series)
    end = min(s.end for s in series)
    if end <= start:
        raise AlignmentError("series do not overlap")
    return [s.window(start, end) for s in series]


# --- dispatch dataset ------------------------------------------------------

CLUSTER_KINDS = ("thermal", "res", "stm", "stl", "hydro", "psp")
CP_PRODUCTS = ("pr", "sr_pos", "sr_neg")


@dataclass(frozen=True)
class Cluster:
    id: str
    zone: str
    kind: str
    cap: float
    g_min: float = 0.0
    vc_fl: float = 0.0
    vc_ml: float = 0.0
    sc: float = 0.0
    eta: float = 1.0


@dataclass(frozen=True)
class ControlPowerRequirement:
    zone: str
    product: str
    block_hours: int
    mw: float


@dataclass
class DispatchDataset:
    index: pd.DatetimeIndex
    zones: list[str]
    clusters: list[Cluster]
    demand: dict[str, np.ndarray]
    af: dict[str, np.ndarray] = field(default_factory=dict)
    out: dict[str, np.ndarray] = field(default_factory=dict)
    chp: dict[str, np.ndarray] = field(default_factory=dict)
    wv: dict[str, np.ndarray] = field(default_factory=dict)
    ntc: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)
    control_power: list[ControlPowerRequirement] = field(default_factory=list)
    voll: float = 3000.0
    curtc: float = 0.0
    epf: float = 9.0
    eta_stm: float = 0.75

    def validate(self) -> "DispatchDataset":
        n = len(self.index)
        if len(set(self.zones)) != len(self.zones):
            raise InvariantError("duplicate zone id")
        ids = [c.id for c in self.clusters]
        if len(set(ids)) != len(ids):
            raise InvariantError("duplicate cluster id")
        for c in self.clusters:
            if c.zone not in self.zones:
                raise ResolutionError(f"cluster {c.id!r} references unknown zone {c.zone!r}")
            if c.kind not in CLUSTER_KINDS:
                raise InvariantError(f"cluster {c.id!r}: unknown kind {c.kind!r}")
            vals = (c.cap, c.g_min, c.vc_fl, c.vc_ml, c.sc, c.eta)
            if not all(math.isfinite(x) for x in vals):
                raise InvariantError(f"cluster {c.id!r}: non-finite parameter")
            if not 0.0 <= c.g_min < 1.0:
                raise InvariantError(f"cluster {c.id!r}: g_min={c.g_min} outside [0, 1)")
            if not 0.0 < c.eta <= 1.0:
                raise InvariantError(f"cluster {c.id!r}: eta={c.eta} outside (0, 1]")
            if c.cap < 0 or c.sc < 0:
                raise InvariantError(f"cluster {c.id!r}: negative capacity or start-up cost")
        for z in self.demand:
            if z not in self.zones:
                raise ResolutionError(f"demand column references unknown zone {z!r}")
        for z in self.zones:
            if z not in self.demand:
                raise ResolutionError(f"no demand series for zone {z!r}")
        for name, table in (("availability", self.af), ("outages", self.out),
                            ("chp", self.chp), ("water values", self.wv)):
            for cid in table:
                if cid not in ids:
                    raise ResolutionError(f"{name} references unknown cluster {cid!r}")
        for a, b in self.ntc:
            for z in (a, b):
                if z not in self.zones:
                    raise ResolutionError(f"ntc references unknown zone {z!r}")
        for req in self.control_power:
            if req.zone not in self.zones:
                raise ResolutionError(f"control power references unknown zone {req.zone!r}")
            if req.product not in CP_PRODUCTS or req.block_hours <= 0 or req.mw < 0:
                raise InvariantError(f"bad control power requirement {req}")
        tables = [self.demand, self.af, self.out, self.chp, self.wv, self.ntc]
        for table in tables:
            for key, arr in table.items():
                if arr.shape != (n,):
                    raise AlignmentError(f"series {key!r} does not match the dataset index")
                if not np.all(np.isfinite(arr)):
                    raise InvariantError(f"series {key!r} contains missing or non-finite values")
        for x, name in ((self.voll, "voll"), (self.curtc, "curtc"), (self.epf, "epf")):
            if not math.isfinite(x):
                raise InvariantError(f"scalar {name} not finite")
        if self.epf <= 0:
            raise InvariantError("epf must be positive")
        if not 0.0 < self.eta_stm <= 1.0:
            raise InvariantError("eta_stm outside (0, 1]")
        return self

    def cluster(self, cid: str) -> Cluster:
        for c in self.clusters:
            if c.id == cid:
                return c
        raise ResolutionError(f"unknown cluster {cid!r}")

    def with_demand(self, zone: str, values: np.ndarray) -> "DispatchDataset":
        demand = dict(self.demand)
        demand[zone] = np.asarray(values, dtype=float)
        return replace(self, demand=demand)


def split_psp(ds: DispatchDataset, longterm_share: float = 0.3) -> DispatchDataset:
    """Split each ``psp`` cluster into a mid-term (``stm``) and a long-term (``stl``) part."""
    if not 0.0 <= longterm_share <= 1.0:
        raise InvariantError("psp_longterm_share outside [0, 1]")
    clusters, af, out, wv, chp = [], dict(ds.af), dict(ds.out), dict(ds.wv), dict(ds.chp)
    for c in ds.clusters:
        if c.kind != "psp":
            clusters.append(c)
            continue
        parts = (("stm", 1.0 - longterm_share, "_mt"), ("stl", longterm_share, "_lt"))
        for kind, share, suffix in parts:
            if share == 0.0:
                continue
            cid = c.id + suffix
            clusters.append(replace(c, id=cid, kind=kind, cap=c.cap * share))
            for table in (af, wv, chp):
                if c.id in table:
                    table[cid] = table[c.id]
            if c.id in out:
                out[cid] = out[c.id] * share
        for table in (af, out, wv, chp):
            table.pop(c.id, None)
    return replace(ds, clusters=clusters, af=af, out=out, wv=wv, chp=chp)


def _read_rows(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return [
            {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
            for row in csv.DictReader(fh)
        ]


def _cluster_table(path, index, dataset_dir, required=False):
    if not path.exists():
        if required:
            raise DataError(f"file not found: {path}")
        return {}
    idx, cols = read_table(path)
    if not idx.equals(index):
        raise AlignmentError(f"{path.relative_to(dataset_dir)}: index differs from demand.csv")
    return cols


def read_dispatch_dataset(directory, psp_longterm_share: float = 0.3) -> DispatchDataset:
    """Load and cross-validate a dispatch dataset directory.

    Required files are ``clusters.csv`` and ``demand.csv``; ``availability.csv``,
    ``outages.csv``, ``chp.csv``, ``water_values.csv``, ``ntc.csv``,
    ``control_power.csv`` and ``scalars.csv`` are optional.
    """
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"dataset directory not found: {d}")
    for name in ("clusters.csv", "demand.csv"):
        if not (d / name).exists():
            raise DataError(f"file not found: {d / name}")
    index, demand = read_table(d / "demand.csv")
    zones = list(demand)

    clusters, blank_eta = [], set()
    for k, row in enumerate(_read_rows(d / "clusters.csv"), start=2):
        try:
            eta = float(row["eta"]) if row.get("eta") else None
            if eta is None:
                blank_eta.add(row["id"])
            clusters.append(Cluster(
                id=row["id"], zone=row["zone"], kind=row.get("kind") or "thermal",
                cap=float(row["cap"]), g_min=float(row.get("g_min") or 0.0),
                vc_fl=float(row.get("vc_fl") or 0.0), vc_ml=float(row.get("vc_ml") or 0.0),
                sc=float(row.get("sc") or 0.0), eta=1.0 if eta is None else eta,
            ))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{d / 'clusters.csv'}: row {k}: {exc}") from exc

    scalars = {}
    if (d / "scalars.csv").exists():
        for row in _read_rows(d / "scalars.csv"):
            try:
                scalars[row["key"]] = float(row["value"])
            except (KeyError, ValueError) as exc:
                raise DataError(f"{d / 'scalars.csv'}: bad row {row}") from exc
    unknown = set(scalars) - {"voll", "curtc", "epf", "eta_stm"}
    if unknown:
        raise DataError(f"{d / 'scalars.csv'}: unknown keys {sorted(unknown)}")

    ntc = {}
    if (d / "ntc.csv").exists():
        for row in _read_rows(d / "ntc.csv"):
            key = (row["from"], row["to"])
            arr = ntc.setdefault(key, np.zeros(len(index)))
            mw = float(row["mw"])
            hour = row.get("hour", "")
            if hour in ("", "*"):
                arr[:] = mw
            else:
                ts = _parse_timestamp(hour, 0)
                pos = index.get_indexer([ts])[0]
                if pos < 0:
                    raise AlignmentError(f"{d / 'ntc.csv'}: hour {hour} outside demand index")
                arr[pos] = mw

    cp = []
    if (d / "control_power.csv").exists():
        for row in _read_rows(d / "control_power.csv"):
            try:
                cp.append(ControlPowerRequirement(
                    row["zone"], row["product"], int(row["block_hours"]), float(row["mw"])))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{d / 'control_power.csv'}: bad row {row}") from exc

    eta_default = scalars.get("eta_stm", DispatchDataset.eta_stm)
    clusters = [
        replace(c, eta=eta_default) if c.id in blank_eta and c.kind in ("stm", "psp") else c
        for c in clusters
    ]
    ds = DispatchDataset(
        index=index, zones=zones, clusters=clusters, demand=demand,
        af=_cluster_table(d / "availability.csv", index, d),
        out=_cluster_table(d / "outages.csv", index, d),
        chp=_cluster_table(d / "chp.csv", index, d),
        wv=_cluster_table(d / "water_values.csv", index, d),
        ntc=ntc, control_power=cp, **scalars,
    )
    ds.validate()
    return split_psp(ds, psp_longterm_share).validate()


def write_dispatch_dataset(ds: DispatchDataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with (d / "clusters.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "zone", "cap", "g_min", "vc_fl", "vc_ml", "sc", "eta", "kind"])
        for c in ds.clusters:
            w.writerow([c.id, c.zone, repr(c.cap), repr(c.g_min), repr(c.vc_fl),
                        repr(c.vc_ml), repr(c.sc), repr(c.eta), c.kind])
    write_table(d / "demand.csv", ds.index, ds.demand)
    for name, table in (("availability.csv", ds.af), ("outages.csv", ds.out),
                        ("chp.csv", ds.chp), ("water_values.csv", ds.wv)):
        if table:
            write_table(d / name, ds.index, table)
    if ds.ntc:
        with (d / "ntc.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["from", "to", "hour", "mw"])
            for (a, b), arr in ds.ntc.items():
                for ts, mw in zip(ds.index, arr):
                    w.writerow([a, b, ts.isoformat(), repr(float(mw))])
    if ds.control_power:
        with (d / "control_power.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["zone", "product", "block_hours", "mw"])
            for r in ds.control_power:
                w.writerow([r.zone, r.product, r.block_hours, repr(r.mw)])
    with (d / "scalars.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for key in ("voll", "curtc", "epf", "eta_stm"):
            w.writerow([key, repr(float(getattr(ds, key)))])
