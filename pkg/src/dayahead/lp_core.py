"""Sparse LP container, bounded-variable revised simplex, and MPS export.

Problems are always minimisation. Each row ``a x (sense) rhs`` receives a
slack column so that ``A x + s = b``; a ``<=`` row has ``s >= 0``, a ``>=`` row
``s <= 0`` and an equality row ``s = 0``.

Dual sign convention: ``duals[i]`` is the sensitivity of the optimal
objective to the right-hand side of row ``i`` (``d obj / d rhs_i``). For a
minimisation this makes duals of ``<=`` rows non-positive, duals of ``>=``
rows non-negative, and the dual of a demand balance row ``supply = demand``
the marginal cost of one more unit of demand.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

INF = math.inf
SENSES = ("=", "<=", ">=")

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50
DEGENERATE_STREAK = 30


class LpError(Exception):
    """Malformed problem."""


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF
    cost: float = 0.0


@dataclass(frozen=True)
class Constraint:
    name: str
    coefs: dict[int, float]
    sense: str
    rhs: float


class LpProblem:
    def __init__(self, name: str = "LP"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self._var_index: dict[str, int] = {}
        self._row_index: dict[str, int] = {}

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    def add_variable(self, name: str, lb: float = 0.0, ub: float = INF, cost: float = 0.0) -> int:
        if name in self._var_index:
            raise LpError(f"duplicate variable {name!r}")
        if not (math.isfinite(cost) and lb <= ub) or lb == INF or ub == -INF or math.isnan(lb) or math.isnan(ub):
            raise LpError(f"variable {name!r}: bad bounds [{lb}, {ub}] or cost {cost}")
        self._var_index[name] = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), float(cost)))
        return len(self.variables) - 1

    def add_constraint(self, name: str, coefs, sense: str, rhs: float) -> int:
        if name in self._row_index:
            raise LpError(f"duplicate constraint {name!r}")
        if sense not in SENSES:
            raise LpError(f"constraint {name!r}: unknown sense {sense!r}")
        if not math.isfinite(rhs):
            raise LpError(f"constraint {name!r}: non-finite rhs")
        items = coefs.items() if isinstance(coefs, dict) else coefs
        row: dict[int, float] = {}
        for key, value in items:
            j = self._var_index[key] if isinstance(key, str) else int(key)
            if not 0 <= j < len(self.variables):
                raise LpError(f"constraint {name!r}: unknown variable {key!r}")
            if j in row:
                raise LpError(f"constraint {name!r}: duplicate entry for {key!r}")
            if not math.isfinite(value):
                raise LpError(f"constraint {name!r}: non-finite coefficient")
            if value != 0.0:
                row[j] = float(value)
        self._row_index[name] = len(self.constraints)
        self.constraints.append(Constraint(name, row, sense, float(rhs)))
        return len(self.constraints) - 1

    def var(self, name: str) -> int:
        return self._var_index[name]

    def row(self, name: str) -> int:
        return self._row_index[name]

    def matrices(self):
        """(c, A csr, senses, b, lb, ub)."""
        n, m = self.n_vars, self.n_rows
        rows, cols, vals = [], [], []
        for i, con in enumerate(self.constraints):
            for j, a in con.coefs.items():
                rows.append(i)
                cols.append(j)
                vals.append(a)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        c = np.array([v.cost for v in self.variables], dtype=float)
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        b = np.array([con.rhs for con in self.constraints], dtype=float)
        senses = [con.sense for con in self.constraints]
        return c, A, senses, b, lb, ub


@dataclass
class LpSolution:
    status: str
    primal: np.ndarray
    duals: np.ndarray
    objective: float
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    basis: tuple[int, ...] = ()

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# --- simplex ----------------------------------------------------------------

_AT_LB, _AT_UB, _FREE_ZERO, _BASIC = 0, 1, 2, 3


class _Simplex:
    def __init__(self, A: sp.csc_matrix, b, lb, ub, max_iter):
        self.A = A
        self.b = b
        self.lb = lb
        self.ub = ub
        self.m, self.N = A.shape
        self.max_iter = max_iter
        self.iterations = 0
        bnorm = float(np.max(np.abs(b))) if b.size else 0.0
        self.feas_tol = FEAS_TOL * (1.0 + bnorm)
        self._indptr, self._indices, self._data = A.indptr, A.indices, A.data

    def column(self, j) -> np.ndarray:
        col = np.zeros(self.m)
        s, e = self._indptr[j], self._indptr[j + 1]
        col[self._indices[s:e]] = self._data[s:e]
        return col

    def refactor(self):
        B = self.A[:, self.basis].toarray()
        self.Binv = np.linalg.inv(B)
        nonbasic = self.state != _BASIC
        xN = np.where(nonbasic, self.x, 0.0)
        self.x[self.basis] = self.Binv @ (self.b - self.A @ xN)

    def run(self, cost) -> str:
        opt_tol = OPT_TOL * max(1.0, float(np.max(np.abs(cost))) if cost.size else 1.0)
        is_basic_pos = np.full(self.N, -1)
        is_basic_pos[self.basis] = np.arange(self.m)
        degenerate = 0
        since_refactor = REFACTOR_EVERY
        while True:
            if since_refactor >= REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0
            if self.iterations >= self.max_iter:
                return "iteration-limit"
            y = self.Binv.T @ cost[self.basis]
            d = cost - self.A.T @ y
            st = self.state
            can_up = (st != _BASIC) & (self.x < self.ub) & (d < -opt_tol)
            can_dn = (st != _BASIC) & (self.x > self.lb) & (d > opt_tol)
            eligible = can_up | can_dn
            if not eligible.any():
                if since_refactor:
                    since_refactor = REFACTOR_EVERY
                    continue
                return "optimal"
            bland = degenerate >= DEGENERATE_STREAK
            if bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                q = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            direction = 1.0 if can_up[q] else -1.0
            alpha = self.Binv @ self.column(q)
            delta = direction * alpha
            xb = self.x[self.basis]
            lbb, ubb = self.lb[self.basis], self.ub[self.basis]
            ratios = np.full(self.m, INF)
            dec = delta > PIVOT_TOL
            inc = delta < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = (xb[dec] - lbb[dec]) / delta[dec]
                ratios[inc] = (ubb[inc] - xb[inc]) / (-delta[inc])
            ratios = np.where(np.isnan(ratios), INF, np.maximum(ratios, 0.0))
            theta_flip = self.ub[q] - self.lb[q]
            theta_row = float(ratios.min()) if self.m else INF
            if theta_row == INF and theta_flip == INF:
                return "unbounded"
            self.iterations += 1
            if theta_flip <= theta_row:
                theta = theta_flip
                self.x[self.basis] = xb - theta * delta
                if direction > 0:
                    self.x[q], self.state[q] = self.ub[q], _AT_UB
                else:
                    self.x[q], self.state[q] = self.lb[q], _AT_LB
                degenerate = 0
                continue
            # Among near-minimal ratios prefer the largest pivot, Bland: lowest index.
            near = np.flatnonzero(ratios <= theta_row + self.feas_tol)
            if bland:
                r = int(near[np.argmin(np.asarray(self.basis)[near])])
            else:
                r = int(near[np.argmax(np.abs(delta[near]))])
            theta = float(ratios[r])
            degenerate = degenerate + 1 if theta <= self.feas_tol else 0
            self.x[self.basis] = xb - theta * delta
            self.x[q] = self.x[q] + direction * theta
            leave = self.basis[r]
            if delta[r] > 0:
                self.x[leave], self.state[leave] = self.lb[leave], _AT_LB
            else:
                self.x[leave], self.state[leave] = self.ub[leave], _AT_UB
            self.basis[r] = q
            self.state[q] = _BASIC
            is_basic_pos[leave] = -1
            is_basic_pos[q] = r
            piv = alpha[r]
            row_r = self.Binv[r] / piv
            self.Binv -= np.outer(alpha, row_r)
            self.Binv[r] = row_r
            since_refactor += 1


def solve(p: LpProblem, max_iter: int | None = None) -> LpSolution:
    """Two-phase bounded revised simplex.

    Dantzig pricing; after a streak of degenerate pivots the entering and
    leaving choices switch to Bland's lowest-index rule until progress resumes.
    """
    c, A, senses, b, lb, ub = p.matrices()
    n, m = p.n_vars, p.n_rows
    if max_iter is None:
        max_iter = max(1000, 20 * (m + n))
    if m == 0:
        return _solve_unconstrained(c, lb, ub)

    slack_lb = np.array([0.0 if s == "<=" else (-INF if s == ">=" else 0.0) for s in senses])
    slack_ub = np.array([INF if s == "<=" else 0.0 for s in senses])

    x = np.zeros(n + m)
    state = np.zeros(n + m, dtype=int)
    for j in range(n):
        if math.isfinite(lb[j]):
            x[j], state[j] = lb[j], _AT_LB
        elif math.isfinite(ub[j]):
            x[j], state[j] = ub[j], _AT_UB
        else:
            x[j], state[j] = 0.0, _FREE_ZERO
    resid = b - A @ x[:n]

    basis = []
    art_rows, art_signs = [], []
    for i in range(m):
        s = n + i
        if slack_lb[i] - FEAS_TOL <= resid[i] <= slack_ub[i] + FEAS_TOL:
            basis.append(s)
            state[s] = _BASIC
            x[s] = resid[i]
        else:
            val = min(max(resid[i], slack_lb[i]), slack_ub[i])
            x[s] = val
            state[s] = _AT_LB if val == slack_lb[i] else _AT_UB
            art_rows.append(i)
            art_signs.append(1.0 if resid[i] - val > 0 else -1.0)
            basis.append(None)

    k = len(art_rows)
    art = sp.csc_matrix((art_signs, (art_rows, np.arange(k))), shape=(m, k))
    full = sp.hstack([A.tocsc(), sp.identity(m, format="csc"), art], format="csc")
    lb_full = np.concatenate([lb, slack_lb, np.zeros(k)])
    ub_full = np.concatenate([ub, slack_ub, np.full(k, INF)])
    x = np.concatenate([x, np.zeros(k)])
    state = np.concatenate([state, np.full(k, _BASIC)])
    for a, i in enumerate(art_rows):
        basis[i] = n + m + a
        x[n + m + a] = abs(resid[i] - x[n + i])

    smp = _Simplex(full, b, lb_full, ub_full, max_iter)
    smp.x, smp.state, smp.basis = x, state, basis

    if k:
        phase1 = np.concatenate([np.zeros(n + m), np.ones(k)])
        status = smp.run(phase1)
        if status == "iteration-limit":
            return _result(p, smp, c, status)
        infeas = float(smp.x[n + m:].sum())
        if infeas > smp.feas_tol:
            return LpSolution("infeasible", smp.x[:n].copy(), np.zeros(m), math.nan,
                              iterations=smp.iterations)
        smp.ub[n + m:] = 0.0
        smp.x[n + m:] = 0.0
        for j in range(n + m, n + m + k):
            if smp.state[j] != _BASIC:
                smp.state[j] = _AT_LB
    phase2 = np.concatenate([c, np.zeros(m + k)])
    status = smp.run(phase2)
    return _result(p, smp, c, status)


def _result(p, smp, c, status) -> LpSolution:
    n, m = p.n_vars, p.n_rows
    x = smp.x[:n].copy()
    if status != "optimal":
        return LpSolution(status, x, np.zeros(m), float(c @ x) if status != "unbounded" else -INF,
                          iterations=smp.iterations)
    smp.refactor()
    x = smp.x[:n].copy()
    cost_full = np.concatenate([c, np.zeros(smp.N - n)])
    y = smp.Binv.T @ cost_full[smp.basis]
    d = c - smp.A[:, :n].T @ y
    # Snap nonbasic structurals onto their bound exactly.
    nb = smp.state[:n] != _BASIC
    x[nb & (smp.state[:n] == _AT_LB)] = smp.lb[:n][nb & (smp.state[:n] == _AT_LB)]
    x[nb & (smp.state[:n] == _AT_UB)] = smp.ub[:n][nb & (smp.state[:n] == _AT_UB)]
    return LpSolution("optimal", x, y, float(c @ x), d, smp.iterations, tuple(smp.basis))


def _solve_unconstrained(c, lb, ub) -> LpSolution:
    x = np.zeros(c.size)
    for j, cj in enumerate(c):
        if cj > 0:
            bound = lb[j]
        elif cj < 0:
            bound = ub[j]
        else:
            bound = lb[j] if math.isfinite(lb[j]) else (ub[j] if math.isfinite(ub[j]) else 0.0)
        if not math.isfinite(bound):
            return LpSolution("unbounded", x, np.zeros(0), -INF)
        x[j] = bound
    return LpSolution("optimal", x, np.zeros(0), float(c @ x), c.copy())


@dataclass(frozen=True)
class Certificate:
    primal_residual: float
    dual_residual: float
    complementarity: float
    primal_objective: float
    dual_objective: float

    @property
    def gap(self) -> float:
        return abs(self.primal_objective - self.dual_objective)


def certify(p: LpProblem, sol: LpSolution) -> Certificate:
    """Optimality residuals of ``sol`` computed from the problem data alone."""
    c, A, senses, b, lb, ub = p.matrices()
    x, y = sol.primal, sol.duals
    ax = A @ x if p.n_rows else np.zeros(0)
    viol = []
    for i, s in enumerate(senses):
        r = ax[i] - b[i]
        viol.append(abs(r) if s == "=" else (max(r, 0.0) if s == "<=" else max(-r, 0.0)))
    viol.extend(np.maximum(lb - x, 0.0))
    viol.extend(np.maximum(x - ub, 0.0))
    d = c - (A.T @ y if p.n_rows else 0.0)
    dual_viol = [0.0]
    for i, s in enumerate(senses):
        if s == "<=":
            dual_viol.append(max(y[i], 0.0))
        elif s == ">=":
            dual_viol.append(max(-y[i], 0.0))
    # A positive reduced cost needs a finite lower bound, a negative one a finite upper bound.
    dual_obj = float(b @ y) if p.n_rows else 0.0
    comp = [0.0]
    for j in range(p.n_vars):
        dj = d[j]
        if dj > 0:
            if math.isfinite(lb[j]):
                dual_obj += lb[j] * dj
                comp.append(abs(dj * (x[j] - lb[j])))
            else:
                dual_viol.append(dj)
        elif dj < 0:
            if math.isfinite(ub[j]):
                dual_obj += ub[j] * dj
                comp.append(abs(dj * (ub[j] - x[j])))
            else:
                dual_viol.append(-dj)
    for i, s in enumerate(senses):
        if s != "=":
            comp.append(abs(y[i] * (ax[i] - b[i])))
    return Certificate(max(viol, default=0.0), max(dual_viol), max(comp),
                       float(c @ x), dual_obj)


# --- MPS export ---------------------------------------------------------------

_BAD_CHARS = re.compile(r"[^A-Za-z0-9_.\-()\[\]]")


def sanitize_name(name: str) -> str:
    """Replace characters MPS readers split on; empty names become ``_``."""
    return _BAD_CHARS.sub("_", name) or "_"


def _num(x: float) -> str:
    """Shortest representation of ``x`` that fits a 12-character MPS field."""
    text = repr(float(x))
    if len(text) > 12:
        for digits in range(12, 0, -1):
            text = f"{x:.{digits}g}"
            if len(text) <= 12:
                break
    if text.endswith(".0"):
        text = text[:-2]
    return text


def _card(f1="", f2="", f3="", f4="", f5="", f6="") -> str:
    line = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}"
    if f5:
        line += f"   {f5:<8}  {f6:>12}"
    return line.rstrip()


def _short_names(names, prefix):
    out, seen = [], set()
    for k, name in enumerate(names):
        s = sanitize_name(name)
        if len(s) > 8 or s in seen or s in ("COST", "RHS", "BND"):
            s = f"{prefix}{k:07d}"
        seen.add(s)
        out.append(s)
    return out


def export_interchange(p: LpProblem, path) -> Path:
    """Write ``p`` as a fixed-format MPS file.

    Names are sanitised; names longer than eight characters (or colliding)
    become ``C#######`` / ``R#######`` codes, and a ``<path>.names`` file
    maps every written name back to the original.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = path.open("w")
    except OSError as exc:
        raise LpError(f"cannot write {path}: {exc}") from exc
    vnames = _short_names([v.name for v in p.variables], "C")
    rnames = _short_names([r.name for r in p.constraints], "R")
    cols: list[list[tuple[str, float]]] = [[] for _ in p.variables]
    for i, con in enumerate(p.constraints):
        for j, a in con.coefs.items():
            cols[j].append((rnames[i], a))
    kind = {"=": "E", "<=": "L", ">=": "G"}
    with fh:
        fh.write(f"NAME          {sanitize_name(p.name)[:8]}\n")
        fh.write("ROWS\n")
        fh.write(_card("N", "COST") + "\n")
        for i, con in enumerate(p.constraints):
            fh.write(_card(kind[con.sense], rnames[i]) + "\n")
        fh.write("COLUMNS\n")
        for j, v in enumerate(p.variables):
            entries = ([("COST", v.cost)] if v.cost != 0.0 else []) + cols[j]
            if not entries:
                entries = [("COST", 0.0)]
            for k in range(0, len(entries), 2):
                pair = entries[k : k + 2]
                f5, f6 = (pair[1][0], _num(pair[1][1])) if len(pair) == 2 else ("", "")
                fh.write(_card("", vnames[j], pair[0][0], _num(pair[0][1]), f5, f6) + "\n")
        fh.write("RHS\n")
        for i, con in enumerate(p.constraints):
            if con.rhs != 0.0:
                fh.write(_card("", "RHS", rnames[i], _num(con.rhs)) + "\n")
        fh.write("BOUNDS\n")
        for j, v in enumerate(p.variables):
            name = vnames[j]
            if v.lb == v.ub:
                fh.write(_card("FX", "BND", name, _num(v.lb)) + "\n")
                continue
            if v.lb == -INF and v.ub == INF:
                fh.write(_card("FR", "BND", name) + "\n")
                continue
            if v.lb == -INF:
                fh.write(_card("MI", "BND", name) + "\n")
            elif v.lb != 0.0:
                fh.write(_card("LO", "BND", name, _num(v.lb)) + "\n")
            if v.ub != INF:
                fh.write(_card("UP", "BND", name, _num(v.ub)) + "\n")
        fh.write("ENDATA\n")
    mapping = [(vnames[j], v.name) for j, v in enumerate(p.variables) if vnames[j] != v.name]
    mapping += [(rnames[i], r.name) for i, r in enumerate(p.constraints) if rnames[i] != r.name]
    names_path = path.with_name(path.name + ".names")
    if mapping:
        names_path.write_text("".join(f"{a}\t{b}\n" for a, b in mapping))
    elif names_path.exists():
        names_path.unlink()
    return path
