"""Experiment driver: method comparison, scaling sweeps and exact oracles.

The two oracles are deliberately independent of the model builder and the
homegrown simplex: the enumeration oracle writes its own LP straight from the
instance data and hands it to HiGHS through :func:`scipy.optimize.linprog`.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .baselines import METHODS, EvaluatedSolution, run_method
from .bnb import SolverParams
from .builder import JOINT, NO_BATTERY, NO_CARBON, NO_ROUTING, VARIANTS, home_sites
from .instance import Instance
from .scenarios import GenConfig, generate
from .validator import Solution

CERTIFY_TOL = 1e-6


class CertificationError(RuntimeError):
    """Solver-reported and validator-recomputed objectives disagree."""


class OracleLimitExceeded(ValueError):
    pass


# -- comparison ----------------------------------------------------------------------

@dataclass
class ComparisonRow:
    method: str
    objective: float
    emissions_kg: float
    wall_time_s: float
    gap: float
    joint_feasible: bool
    status: str = ""
    error: str = ""


COMPARISON_FIELDS = ("method", "status", "objective", "emissions_kg", "gap", "joint_feasible", "error",
                     "wall_time_s")


def certify(ev: EvaluatedSolution, tol: float = CERTIFY_TOL) -> None:
    """Raise if the solver objective and the validator objective disagree."""
    if ev.metrics is None or not ev.solver_objective_comparable:
        return
    solver, valid = ev.report.objective, ev.metrics.objective_total
    if abs(solver - valid) > tol * max(1.0, abs(valid)):
        raise CertificationError(f"{ev.method}: solver objective {solver!r} but validator {valid!r}")


def run_comparison(inst: Instance, params: SolverParams | None = None,
                   methods=METHODS) -> list[ComparisonRow]:
    """Joint solve plus baselines, one row per method in ``methods`` order.

    A method that raises is reported in its row; a certification mismatch
    aborts with :class:`CertificationError` after every method has run.
    """
    params = params or SolverParams()
    rows, bad = [], []
    for method in methods:
        t0 = time.perf_counter()
        try:
            ev = run_method(inst, method, params)
        except Exception as exc:  # recorded, the other methods still run
            rows.append(ComparisonRow(method, math.nan, math.nan, time.perf_counter() - t0, math.nan,
                                      False, "error", f"{type(exc).__name__}: {exc}"))
            continue
        try:
            certify(ev)
        except CertificationError as exc:
            bad.append(str(exc))
        m = ev.metrics
        rows.append(ComparisonRow(method, m.objective_total if m else math.nan,
                                  m.emissions_kg if m else math.nan, ev.wall_time_s, ev.report.gap,
                                  ev.joint_feasible, ev.report.status))
    if bad:
        err = CertificationError("; ".join(bad))
        err.rows = rows
        raise err
    return rows


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, fields, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_cell(getattr(r, f) if not isinstance(r, dict) else r[f]) for f in fields])


def write_comparison_csv(rows: list[ComparisonRow], fh) -> None:
    write_csv(rows, COMPARISON_FIELDS, fh)


# -- sweeps --------------------------------------------------------------------------

AXES = {"sites": "num_sites", "periods": "num_periods", "jobs": "num_jobs"}
DEFAULT_GRID = {"sites": [2, 3, 4], "periods": [12, 24, 48], "jobs": [4, 6, 8]}
SWEEP_FIELDS = ("axis", "value", "repetition", "seed", "scenario", "sites", "periods", "jobs", "classes",
                "status", "objective", "gap", "nodes", "error", "wall_time_s")


@dataclass
class SweepConfig:
    axis: str
    values: list[int]
    base: GenConfig = field(default_factory=GenConfig)
    params: SolverParams = field(default_factory=SolverParams)
    repetitions: int = 1
    instance_factory: Callable[[GenConfig], Instance] | None = None  # defaults to ``generate``

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {sorted(AXES)}")
        if not self.values:
            raise ValueError("values must be nonempty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def iter_sweep(cfg: SweepConfig) -> Iterator[dict]:
    """Yield one row per (value, repetition) as soon as it is solved."""
    make = cfg.instance_factory or (lambda c: generate(c, cfg.params))
    for value in cfg.values:
        gc = replace(cfg.base, **{AXES[cfg.axis]: int(value)})
        for rep in range(cfg.repetitions):
            row = {"axis": cfg.axis, "value": int(value), "repetition": rep, "seed": gc.seed,
                   "scenario": gc.scenario, "sites": gc.num_sites, "periods": gc.num_periods,
                   "jobs": gc.num_jobs, "classes": gc.num_classes, "status": "", "objective": math.nan,
                   "gap": math.nan, "nodes": 0, "error": ""}
            t0 = time.perf_counter()
            try:
                ev = run_method(make(gc), JOINT, cfg.params)
                row.update(status=ev.report.status, gap=ev.report.gap, nodes=ev.report.nodes,
                           objective=ev.metrics.objective_total if ev.metrics else math.nan)
            except Exception as exc:
                # unserviceable demand surfaces here (generation or build); keep the row
                row.update(status="infeasible" if "infeasib" in str(exc).lower() or
                           type(exc).__name__ in ("InfeasibleByConstruction", "BaselineInfeasible")
                           else "error", error=f"{type(exc).__name__}: {exc}")
            row["wall_time_s"] = time.perf_counter() - t0
            yield row


def run_sweep(cfg: SweepConfig, fh=None) -> list[dict]:
    """Run a sweep; when ``fh`` is given, rows are written and flushed as they finish."""
    rows = []
    writer = None
    if fh is not None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_FIELDS)
        fh.flush()
    for row in iter_sweep(cfg):
        rows.append(row)
        if writer is not None:
            writer.writerow([_cell(row[f]) for f in SWEEP_FIELDS])
            fh.flush()
    return rows


# -- oracles -------------------------------------------------------------------------

def knapsack_oracle(values, weights, capacity) -> float:
    """Exact 0-1 knapsack optimum by dynamic programming over capacity."""
    cap = int(math.floor(capacity + 1e-9))
    if cap < 0:
        raise ValueError("capacity must be >= 0")
    best = [0.0] * (cap + 1)
    for val, wt in zip(values, weights):
        if wt < 0 or float(wt) != int(wt):
            raise ValueError("weights must be nonnegative integers")
        wt = int(wt)
        if val <= 0 or wt > cap:
            continue
        for c in range(cap, wt - 1, -1):
            cand = best[c - wt] + val
            if cand > best[c]:
                best[c] = cand
    return float(best[cap])


@dataclass
class OracleResult:
    status: str  # "optimal" or "infeasible"
    objective: float
    solution: Solution | None
    patterns: int
    lps_solved: int


def job_schedules(num_sites: int, num_periods: int, min_up: int, non_preemptive: bool) -> list[np.ndarray]:
    """Every (site, period) 0/1 matrix one job may follow.

    Each period the job is off or at one site; every run lasts at least the
    minimum up-time (truncated at the horizon); non-preemptive jobs start once.
    """
    out = []
    for assign in itertools.product(range(-1, num_sites), repeat=num_periods):
        runs = []
        prev = -1
        for t, s in enumerate(assign):
            if s >= 0 and s != prev:
                runs.append([t, t])
            elif s >= 0:
                runs[-1][1] = t
            prev = s
        if non_preemptive and len(runs) > 1:
            continue
        if any(end - start + 1 < min(min_up, num_periods - start) for start, end in runs):
            continue
        u = np.zeros((num_sites, num_periods))
        for t, s in enumerate(assign):
            if s >= 0:
                u[s, t] = 1.0
        out.append(u)
    return out


class _OracleLP:
    """Continuous part of the problem for fixed training schedules and grid flags.

    Columns: x over permitted (site, class, period), then per (site, period)
    blocks of p_buy, p_sell, p_chg, p_dis, soc.
    """

    def __init__(self, inst: Instance, variant: str):
        a = inst.arrays
        I, J, K, T = inst.dims
        self.inst, self.a = inst, a
        dt = a.dt
        permitted = a.feasible_pair.copy()
        if variant == NO_ROUTING:
            home = home_sites(inst)
            permitted[:] = False
            for k, i in home.items():
                permitted[i, k] = True
        self.xcols = [(i, k, t) for i in range(I) for k in range(K) for t in range(T) if permitted[i, k]]
        nx = len(self.xcols)
        base = nx

        def col(q, i, t):  # q: 0 buy, 1 sell, 2 chg, 3 dis, 4 soc
            return base + q * I * T + i * T + t

        self.col = col
        n = nx + 5 * I * T
        c = np.zeros(n)  # minimisation of the negated objective
        for p, (i, k, t) in enumerate(self.xcols):
            c[p] = -((a.rev[k] - a.gpu[k]) - a.sla * a.tau[i, k])
        lb = np.zeros(n)
        ub = np.full(n, np.inf)
        for p, (i, k, t) in enumerate(self.xcols):
            ub[p] = a.demand[k, t]
        chg_cap = np.zeros(I) if variant == NO_BATTERY else a.pchg_max
        dis_cap = np.zeros(I) if variant == NO_BATTERY else a.pdis_max
        for i in range(I):
            for t in range(T):
                c[col(0, i, t)] = a.buy[t] * dt
                c[col(1, i, t)] = -a.sell[t] * dt
                c[col(2, i, t)] = a.deg * dt
                c[col(3, i, t)] = a.deg * dt
                ub[col(0, i, t)] = ub[col(1, i, t)] = a.cap[i]
                ub[col(2, i, t)] = chg_cap[i]
                ub[col(3, i, t)] = dis_cap[i]
                lb[col(4, i, t)] = a.soc_min[i]
                ub[col(4, i, t)] = a.soc_max[i]
        if inst.enforce_terminal_soc and T:
            for i in range(I):
                lb[col(4, i, T - 1)] = max(lb[col(4, i, T - 1)], a.soc_init[i])

        eq_rows, eq_cols, eq_vals = [], [], []
        b_eq = []
        r = 0
        # energy balance: buy + dis - sell - chg - (1 + alpha) * P_inf x = (1 + alpha) * P_tr u - loc
        self.balance_row = {}
        for i in range(I):
            for t in range(T):
                self.balance_row[i, t] = r
                for q, s in ((0, 1.0), (3, 1.0), (1, -1.0), (2, -1.0)):
                    eq_rows.append(r)
                    eq_cols.append(col(q, i, t))
                    eq_vals.append(s)
                b_eq.append(0.0)
                r += 1
        for p, (i, k, t) in enumerate(self.xcols):
            eq_rows.append(self.balance_row[i, t])
            eq_cols.append(p)
            eq_vals.append(-(1.0 + a.alpha[i, t]) * a.p_inf[k])
        # demand
        for k in range(K):
            for t in range(T):
                for p, (i, kk, tt) in enumerate(self.xcols):
                    if kk == k and tt == t:
                        eq_rows.append(r)
                        eq_cols.append(p)
                        eq_vals.append(1.0)
                b_eq.append(a.demand[k, t])
                r += 1
        # state of charge
        for i in range(I):
            for t in range(T):
                entries = [(col(4, i, t), 1.0), (col(2, i, t), -a.eta_c[i] * dt),
                           (col(3, i, t), dt / a.eta_d[i])]
                if t > 0:
                    entries.append((col(4, i, t - 1), -1.0))
                for cc, v in entries:
                    eq_rows.append(r)
                    eq_cols.append(cc)
                    eq_vals.append(v)
                b_eq.append(a.soc_init[i] if t == 0 else 0.0)
                r += 1
        self.A_eq = sp.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(r, n))
        self.b_eq = np.array(b_eq)

        ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []
        r = 0
        # grid flags relaxed to their convex hull: buy + sell <= capacity
        for i in range(I):
            for t in range(T):
                ub_rows += [r, r]
                ub_cols += [col(0, i, t), col(1, i, t)]
                ub_vals += [1.0, 1.0]
                b_ub.append(a.cap[i])
                r += 1
        if variant != NO_CARBON and math.isfinite(a.e_max):
            for i in range(I):
                for t in range(T):
                    ub_rows.append(r)
                    ub_cols.append(col(0, i, t))
                    ub_vals.append(a.rho[i, t] * dt)
            b_ub.append(a.e_max)
            r += 1
        self.A_ub = sp.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(r, n))
        self.b_ub = np.array(b_ub)
        self.c, self.lb, self.ub = c, lb, ub

    def solve(self, u_all: np.ndarray, grid_flags: np.ndarray | None):
        """``u_all`` is (I, J, T); ``grid_flags`` (I, T) with 1 = buy, 0 = sell, or None."""
        a = self.a
        I, J, K, T = self.inst.dims
        b_eq = self.b_eq.copy()
        train = (1.0 + a.alpha) * np.einsum("j,ijt->it", a.p_tr, u_all) - a.loc
        for (i, t), r in self.balance_row.items():
            b_eq[r] = train[i, t]
        ub = self.ub
        if grid_flags is not None:
            ub = ub.copy()
            for i in range(I):
                for t in range(T):
                    if grid_flags[i, t]:
                        ub[self.col(1, i, t)] = 0.0
                    else:
                        ub[self.col(0, i, t)] = 0.0
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=b_eq,
                      bounds=np.column_stack([self.lb, ub]), method="highs",
                      options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9})
        if res.status != 0:
            return None, None
        return -res.fun, res.x

    def to_solution(self, u_all, z) -> Solution:
        a = self.a
        I, J, K, T = self.inst.dims
        sol = Solution.zeros(self.inst)
        sol.u = u_all.copy()
        prev = np.concatenate([np.zeros((I, J, 1)), u_all[:, :, :-1]], axis=2)
        sol.v = np.maximum(u_all - prev, 0.0)
        sol.w = np.maximum(prev - u_all, 0.0)
        for p, (i, k, t) in enumerate(self.xcols):
            sol.x[i, k, t] = z[p]
        blocks = [z[self.col(q, 0, 0): self.col(q, 0, 0) + I * T].reshape(I, T) for q in range(5)]
        buy, sell, sol.p_chg, sol.p_dis, sol.soc = (b.copy() for b in blocks)
        both = np.minimum(buy, sell)  # simultaneous trade is never better; net it out
        sol.p_buy, sol.p_sell = buy - both, sell - both
        sol.y_buy = (sol.p_buy > 0).astype(float)
        sol.y_sell = ((sol.p_sell > 0) & (sol.y_buy == 0)).astype(float)
        sol.p_it = np.einsum("j,ijt->it", a.p_tr, sol.u) + np.einsum("k,ikt->it", a.p_inf, sol.x)
        sol.p_tot = (1.0 + a.alpha) * sol.p_it
        return sol


def enumeration_oracle(inst: Instance, limit: int = 2 ** 20, variant: str = JOINT,
                       non_preemption: bool = True) -> OracleResult:
    """Exhaustive optimum over training schedules (and grid flags when needed).

    Grid flags are enumerated only if some period sells above the buy price;
    otherwise buying and selling at once is never profitable and the flags
    can be replaced by ``P_buy + P_sell <= C^grid`` without changing the optimum.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    a = inst.arrays
    I, J, K, T = inst.dims
    per_job = [job_schedules(I, T, int(a.u_min[j]), non_preemption and inst.jobs[j].non_preemptive)
               for j in range(J)]
    flags_needed = bool(np.any(a.sell > a.buy))
    n_flags = 2 ** (I * T) if flags_needed else 1
    patterns = math.prod(len(s) for s in per_job) * n_flags
    if patterns > limit:
        raise OracleLimitExceeded(f"{patterns} patterns exceed the limit {limit}")

    lp = _OracleLP(inst, variant)
    best_val, best = -math.inf, None
    solved = 0
    flag_iter = (list(itertools.product((0.0, 1.0), repeat=I * T)) if flags_needed else [None])
    for combo in itertools.product(*per_job):
        u_all = np.stack(combo, axis=1) if J else np.zeros((I, 0, T))
        reward = float(np.einsum("j,ijt->", a.r_tr, u_all))
        for fl in flag_iter:
            flags = None if fl is None else np.array(fl).reshape(I, T)
            val, z = lp.solve(u_all, flags)
            solved += 1
            if val is None:
                continue
            if best is None or val + reward > best_val + 1e-12 * max(1.0, abs(best_val)):
                best_val, best = val + reward, (u_all, z)
    if best is None:
        return OracleResult("infeasible", -math.inf, None, patterns, solved)
    return OracleResult("optimal", best_val, lp.to_solution(*best), patterns, solved)
