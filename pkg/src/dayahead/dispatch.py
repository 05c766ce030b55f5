"""Three-day dispatch LP with a linear unit commitment and price extraction.

Each run covers days D-1, D, D+1 for target day D (hours 25..48 of the
72-hour horizon). The hourly price estimator is the dual of the zonal
market-clearing row.

Cluster kinds:

* ``thermal``: running capacity ``Pon`` with start-ups, part-load costs,
  minimum load, CHP must-run and control-power reservation.
* ``res``: intermittent renewables, available feed-in is generated or curtailed.
* ``stm``: mid-term pumped storage with a storage level and fixed boundary fills.
* ``stl``: long-term pumped storage priced at the water value.
* ``hydro``: reservoir generation priced at the water value.

Non-thermal generation is bounded directly by ``cap * af - out``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import lp_core
from .data_io import (
    DataError,
    Cluster,
    ControlPowerRequirement,
    DispatchDataset,
    InvariantError,
    TimeSeries,
)

log = logging.getLogger(__name__)

HORIZON = 72
TARGET = slice(24, 48)
PUMP_FACTOR = 1.1
BOUNDARY_FILL = 0.3


class DispatchError(Exception):
    """Solve or model failure (CLI exit status 3)."""


@dataclass
class DispatchInstance:
    hours: pd.DatetimeIndex
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
    p_on_init: dict[str, float] = field(default_factory=dict)
    boundary_in_power_units: bool = False

    @property
    def target_day(self) -> pd.Timestamp:
        return self.hours[24].normalize()

    def series(self, table, cid, default) -> np.ndarray:
        return table[cid] if cid in table else np.full(HORIZON, default)

    def available(self, c: Cluster) -> np.ndarray:
        return np.maximum(c.cap * self.series(self.af, c.id, 1.0) - self.series(self.out, c.id, 0.0), 0.0)

    def validate(self) -> None:
        if len(self.hours) != HORIZON:
            raise InvariantError(f"dispatch horizon must be {HORIZON} hours, got {len(self.hours)}")
        if self.epf <= 0:
            raise InvariantError("epf must be positive")
        seen = set()
        for c in self.clusters:
            if c.zone not in self.zones:
                raise InvariantError(f"cluster {c.id!r} in unknown zone {c.zone!r}")
            if not 0.0 <= c.g_min < 1.0:
                raise InvariantError(f"cluster {c.id!r}: g_min outside [0, 1)")
            if c.kind == "thermal" and c.vc_ml < c.vc_fl:
                raise InvariantError(
                    f"cluster {c.id!r}: vc_ml={c.vc_ml} < vc_fl={c.vc_fl}; part-load term "
                    "would reward part-load operation"
                )
            if c.kind == "psp":
                raise InvariantError(f"cluster {c.id!r}: split psp clusters before dispatch")
            if c.cap < 0:
                raise InvariantError(f"cluster {c.id!r}: negative capacity")
            if c.kind in ("thermal", "res", "hydro", "stl", "stm"):
                chp = self.series(self.chp, c.id, 0.0)
                if np.any(chp > self.available(c) + 1e-9):
                    raise InvariantError(f"cluster {c.id!r}: CHP must-run exceeds availability")
        for table in (self.demand, self.af, self.out, self.chp, self.wv, self.ntc):
            for key, arr in table.items():
                if np.shape(arr) != (HORIZON,):
                    raise InvariantError(f"series {key!r} is not {HORIZON} hours long")
        for arr in self.ntc.values():
            if np.any(arr < 0):
                raise InvariantError("negative NTC")
        for req in self.control_power:
            key = (req.zone, req.product)
            if key in seen:
                raise InvariantError(f"duplicate control power requirement {key}")
            seen.add(key)
            if req.mw < 0:
                raise InvariantError("negative control power requirement")


@dataclass
class DispatchSolution:
    values: dict[str, dict]
    prices: dict[str, np.ndarray]
    objective: float
    lp: lp_core.LpProblem
    lp_solution: lp_core.LpSolution

    def target_prices(self, zone: str) -> np.ndarray:
        return self.prices[zone][TARGET]


@dataclass
class _Index:
    """Variable bookkeeping: family -> key -> list of 72 column indices."""

    cols: dict[str, dict] = field(default_factory=dict)

    def put(self, family, key, idx):
        self.cols.setdefault(family, {})[key] = idx


def build_lp(inst: DispatchInstance) -> tuple[lp_core.LpProblem, _Index, dict[str, list[int]]]:
    """Assemble the LP. Returns (problem, variable index, demand row ids per zone)."""
    inst.validate()
    p = lp_core.LpProblem(f"D{inst.target_day:%Y%m%d}")
    ix = _Index()
    T = range(HORIZON)
    zone_supply = {z: [dict() for _ in T] for z in inst.zones}

    def add_to_balance(zone, t, j, coef):
        zone_supply[zone][t][j] = zone_supply[zone][t].get(j, 0.0) + coef

    cp_blocks: dict[tuple[str, str], list[list[int]]] = {}
    for req in inst.control_power:
        if req.mw > 0:
            nb = math.ceil(HORIZON / req.block_hours)
            cp_blocks[(req.zone, req.product)] = [
                list(range(k * req.block_hours, min((k + 1) * req.block_hours, HORIZON)))
                for k in range(nb)
            ]

    boundary_scale = 1.0 if inst.boundary_in_power_units else inst.epf

    for c in inst.clusters:
        avail = inst.available(c)
        chp = inst.series(inst.chp, c.id, 0.0)
        wv = inst.series(inst.wv, c.id, 0.0)
        cid = c.id
        if c.kind == "thermal":
            k = c.g_min / (1.0 - c.g_min)
            part = (c.vc_ml - c.vc_fl) * k
            G = [p.add_variable(f"G[{cid},{t}]", chp[t], lp_core.INF, c.vc_fl - part) for t in T]
            P = [p.add_variable(f"PON[{cid},{t}]", 0.0, avail[t], part) for t in T]
            SU = [p.add_variable(f"SU[{cid},{t}]", 0.0, lp_core.INF, c.sc) for t in T]
            ix.put("G", cid, G)
            ix.put("PON", cid, P)
            ix.put("SU", cid, SU)
            cp = {}
            for product in ("pr", "sr_pos", "sr_neg"):
                blocks = cp_blocks.get((c.zone, product))
                if not blocks:
                    continue
                name = {"pr": "PCR", "sr_pos": "SCRPOS", "sr_neg": "SCRNEG"}[product]
                cols = [p.add_variable(f"{name}[{cid},{b}]") for b in range(len(blocks))]
                ix.put(name, cid, cols)
                cp[product] = {t: cols[b] for b, hours in enumerate(blocks) for t in hours}
            for t in T:
                upper = {G[t]: 1.0, P[t]: -1.0}
                lower = {G[t]: -1.0, P[t]: c.g_min}
                if "pr" in cp:
                    upper[cp["pr"][t]] = 1.0
                    lower[cp["pr"][t]] = 1.0
                if "sr_pos" in cp:
                    upper[cp["sr_pos"][t]] = 1.0
                if "sr_neg" in cp:
                    lower[cp["sr_neg"][t]] = 1.0
                p.add_constraint(f"GMAX[{cid},{t}]", upper, "<=", 0.0)
                if c.g_min > 0 or len(lower) > 2:
                    p.add_constraint(f"GMIN[{cid},{t}]", lower, "<=", 0.0)
                if t == 0:
                    p.add_constraint(f"START[{cid},0]", {P[0]: 1.0, SU[0]: -1.0}, "<=",
                                     float(inst.p_on_init.get(cid, 0.0)))
                else:
                    p.add_constraint(f"START[{cid},{t}]",
                                     {P[t]: 1.0, P[t - 1]: -1.0, SU[t]: -1.0}, "<=", 0.0)
                add_to_balance(c.zone, t, G[t], 1.0)
        elif c.kind == "res":
            G = [p.add_variable(f"G[{cid},{t}]", chp[t], avail[t], c.vc_fl) for t in T]
            CU = [p.add_variable(f"CURT[{cid},{t}]", 0.0, lp_core.INF, inst.curtc) for t in T]
            ix.put("G", cid, G)
            ix.put("CURT", cid, CU)
            for t in T:
                p.add_constraint(f"RES[{cid},{t}]", {G[t]: 1.0, CU[t]: 1.0}, "=", float(avail[t]))
                add_to_balance(c.zone, t, G[t], 1.0)
        elif c.kind == "stm":
            level_max = c.cap * inst.epf
            boundary = BOUNDARY_FILL * c.cap * boundary_scale
            G = [p.add_variable(f"G[{cid},{t}]", chp[t], avail[t], c.vc_fl) for t in T]
            CM = [p.add_variable(f"CM[{cid},{t}]") for t in T]
            SL = []
            for t in T:
                lo, hi = (boundary, boundary) if t == HORIZON - 1 else (0.0, level_max)
                SL.append(p.add_variable(f"SL[{cid},{t}]", lo, hi))
            ix.put("G", cid, G)
            ix.put("CM", cid, CM)
            ix.put("SL", cid, SL)
            for t in T:
                row = {SL[t]: 1.0, G[t]: 1.0, CM[t]: -c.eta}
                if t == 0:
                    p.add_constraint(f"SLBAL[{cid},0]", row, "=", boundary)
                else:
                    row[SL[t - 1]] = -1.0
                    p.add_constraint(f"SLBAL[{cid},{t}]", row, "=", 0.0)
                p.add_constraint(f"TURB[{cid},{t}]", {G[t]: 1.0, CM[t]: PUMP_FACTOR}, "<=", c.cap)
                add_to_balance(c.zone, t, G[t], 1.0)
                add_to_balance(c.zone, t, CM[t], -1.0)
        elif c.kind == "stl":
            G = [p.add_variable(f"G[{cid},{t}]", chp[t], avail[t], c.vc_fl + wv[t]) for t in T]
            CL = [p.add_variable(f"CL[{cid},{t}]", 0.0, lp_core.INF, -wv[t]) for t in T]
            ix.put("G", cid, G)
            ix.put("CL", cid, CL)
            for t in T:
                p.add_constraint(f"STL[{cid},{t}]", {G[t]: 1.0, CL[t]: 1.0}, "<=", c.cap)
                add_to_balance(c.zone, t, G[t], 1.0)
                add_to_balance(c.zone, t, CL[t], -1.0)
        elif c.kind == "hydro":
            G = [p.add_variable(f"G[{cid},{t}]", chp[t], avail[t], c.vc_fl + wv[t]) for t in T]
            ix.put("G", cid, G)
            for t in T:
                add_to_balance(c.zone, t, G[t], 1.0)
        else:
            raise InvariantError(f"cluster {cid!r}: unsupported kind {c.kind!r}")

    for (zone, product), blocks in cp_blocks.items():
        name = {"pr": "PCR", "sr_pos": "SCRPOS", "sr_neg": "SCRNEG"}[product]
        providers = [c.id for c in inst.clusters if c.zone == zone and c.kind == "thermal"]
        if not providers:
            raise InvariantError(f"zone {zone!r} requires {product} but has no thermal cluster")
        mw = next(r.mw for r in inst.control_power if (r.zone, r.product) == (zone, product))
        for b in range(len(blocks)):
            row = {ix.cols[name][cid][b]: 1.0 for cid in providers}
            p.add_constraint(f"{name}REQ[{zone},{b}]", row, "=", mw)

    for zone in inst.zones:
        SH = [p.add_variable(f"SHED[{zone},{t}]", 0.0, lp_core.INF, inst.voll) for t in T]
        ix.put("SHED", zone, SH)
        for t in T:
            add_to_balance(zone, t, SH[t], 1.0)
    for (a, b), cap in inst.ntc.items():
        F = [p.add_variable(f"FLOW[{a},{b},{t}]", 0.0, float(cap[t])) for t in T]
        ix.put("FLOW", (a, b), F)
        for t in T:
            add_to_balance(b, t, F[t], 1.0)
            add_to_balance(a, t, F[t], -1.0)

    demand_rows = {}
    for zone in inst.zones:
        d = inst.demand[zone]
        demand_rows[zone] = [
            p.add_constraint(f"DEM[{zone},{t}]", zone_supply[zone][t], "=", float(d[t])) for t in T
        ]
    return p, ix, demand_rows


def solve_day(inst: DispatchInstance, export_path=None) -> DispatchSolution:
    p, ix, demand_rows = build_lp(inst)
    if export_path is not None:
        lp_core.export_interchange(p, export_path)
    sol = lp_core.solve(p)
    if not sol.optimal:
        raise DispatchError(
            f"dispatch LP for target day {inst.target_day.date()} is {sol.status}; "
            "with shedding available at every hour this indicates a data error"
        )
    values = {fam: {k: sol.primal[cols] for k, cols in fams.items()} for fam, fams in ix.cols.items()}
    prices = {z: sol.duals[rows] for z, rows in demand_rows.items()}
    return DispatchSolution(values, prices, sol.objective, p, sol)


# --- rolling window -----------------------------------------------------------

def instance_for_day(ds: DispatchDataset, day, demand: dict[str, np.ndarray] | None = None,
                     p_on_init=None, boundary_in_power_units: bool = False) -> DispatchInstance:
    """Slice the 72 hours [day-1, day+2) out of the dataset."""
    day = pd.Timestamp(day).normalize()
    start = day - pd.Timedelta(days=1)
    i = ds.index.get_indexer([start])[0]
    if i < 0 or i + HORIZON > len(ds.index):
        raise DataError(
            f"dispatch horizon for {day.date()} ({start} + 72h) exceeds dataset index "
            f"[{ds.index[0]}, {ds.index[-1]}]"
        )
    sl = slice(i, i + HORIZON)
    demand = ds.demand if demand is None else demand
    cut = lambda table: {k: np.asarray(v[sl], dtype=float) for k, v in table.items()}
    return DispatchInstance(
        hours=ds.index[sl], zones=list(ds.zones), clusters=list(ds.clusters),
        demand=cut(demand), af=cut(ds.af), out=cut(ds.out), chp=cut(ds.chp), wv=cut(ds.wv),
        ntc=cut(ds.ntc), control_power=list(ds.control_power), voll=ds.voll, curtc=ds.curtc,
        epf=ds.epf, p_on_init=dict(p_on_init or {}),
        boundary_in_power_units=boundary_in_power_units,
    )


def demand_for_source(ds: DispatchDataset, source: str, improved: TimeSeries | None = None,
                      zone: str | None = None) -> dict[str, np.ndarray]:
    """Demand table for ``source``; ``improved`` replaces one zone's TSO demand where it exists."""
    if source == "tso":
        return ds.demand
    if source != "improved":
        raise DataError(f"unknown demand source {source!r}")
    if improved is None:
        raise DataError("improved demand source selected but no improved series given")
    zone = zone or ds.zones[0]
    if zone not in ds.demand:
        raise DataError(f"unknown zone {zone!r}")
    values = ds.demand[zone].copy()
    pos = ds.index.get_indexer(improved.index)
    ok = pos >= 0
    values[pos[ok]] = improved.values[ok]
    out = dict(ds.demand)
    out[zone] = values
    return out


def _solve_cold(args):
    inst, export_path = args
    return solve_day(inst, export_path)


def run_rolling(ds: DispatchDataset, days, demand_source: str = "tso",
                improved: TimeSeries | None = None, zone: str | None = None,
                cold_start: bool = False, boundary_in_power_units: bool = False,
                export_dir=None, jobs: int = 1) -> dict[str, TimeSeries]:
    """Target-day prices per zone, concatenated over consecutive ``days``.

    With hand-off (default) each window starts from the previous window's
    running capacity at its hour 24; ``cold_start`` starts every window from
    zero and lets days run in parallel.
    """
    if isinstance(days, tuple) and len(days) == 2:
        day_list = list(pd.date_range(pd.Timestamp(days[0]).normalize(),
                                      pd.Timestamp(days[1]).normalize(), freq="D"))
    else:
        day_list = [pd.Timestamp(d).normalize() for d in days]
    if not day_list:
        raise DataError("empty day range")
    if any(b - a != pd.Timedelta(days=1) for a, b in zip(day_list, day_list[1:])):
        raise DataError("dispatch days must be consecutive")
    demand = demand_for_source(ds, demand_source, improved, zone)
    export = Path(export_dir) if export_dir is not None else None
    path_for = lambda d: None if export is None else export / f"lp_{d:%Y%m%d}.mps"

    prices = {z: [] for z in ds.zones}
    if cold_start:
        tasks = [(instance_for_day(ds, d, demand, None, boundary_in_power_units), path_for(d))
                 for d in day_list]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                sols = list(pool.map(_solve_cold, tasks))
        else:
            sols = [_solve_cold(t) for t in tasks]
    else:
        sols, p_on = [], {}
        for d in day_list:
            inst = instance_for_day(ds, d, demand, p_on, boundary_in_power_units)
            sol = solve_day(inst, path_for(d))
            p_on = {cid: float(v[23]) for cid, v in sol.values.get("PON", {}).items()}
            sols.append(sol)
    for sol in sols:
        for z in ds.zones:
            prices[z].append(sol.target_prices(z))
    return {
        z: TimeSeries(day_list[0], np.concatenate(v), "EUR_per_MWh") for z, v in prices.items()
    }


def write_prices(path, prices: dict[str, TimeSeries]) -> Path:
    """Long-format ``timestamp,zone,price`` file."""
    import csv

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "zone", "price"])
        for zone, s in prices.items():
            for ts, v in zip(s.index, s.values):
                w.writerow([ts.isoformat(), zone, repr(float(v))])
    return path


def read_prices(path, zone: str | None = None) -> TimeSeries:
    import csv

    rows = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(row["zone"], []).append((pd.Timestamp(row["timestamp"]), float(row["price"])))
    if not rows:
        raise DataError(f"{path}: no price rows")
    zone = zone or next(iter(rows))
    if zone not in rows:
        raise DataError(f"{path}: zone {zone!r} not present")
    pts = sorted(rows[zone])
    return TimeSeries(pts[0][0], [v for _, v in pts], "EUR_per_MWh")
