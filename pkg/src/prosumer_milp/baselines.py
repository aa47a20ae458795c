"""The joint solve and the five comparison methods, all scored on the full system.

Every method ends with :func:`compute_metrics` and :func:`check_solution` on
the original instance, so objectives and emissions are comparable no matter
which surrogate a method optimised internally.

Decomposition protocols (declared, not inferred):

compute-only
    1. workload MILP (training, routing, minimum up-time, demand, latency)
       pricing all facility power at the grid-buy rate, with each site limited
       to grid capacity plus local generation; no battery, export or carbon cap;
    2. greedy dispatch per period: local generation covers load, surplus is
       sold, the remainder is bought; the battery stays idle.
energy-only
    1. each inference class goes to its lowest-latency site; training jobs go
       round-robin over sites in job order, start in the first period and run
       for exactly their minimum up-time (skipped if the site cannot power them);
    2. energy MILP with the workload fixed and no carbon cap.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bnb import STATUS_INFEASIBLE, SolveReport, SolverParams, solve_milp
from .builder import (JOINT, NO_BATTERY, NO_CARBON, NO_ROUTING, BuildOptions, build, home_sites,
                      solution_from_point)
from .instance import Instance
from .lp import OPTIMAL, solve_lp
from .milp import BINARY, EQ, GE, LE, MAXIMIZE, MilpModel
from .validator import ConstraintReport, Metrics, Solution, check_solution, compute_metrics

COMPUTE_ONLY = "compute_only"
ENERGY_ONLY = "energy_only"
METHODS = (JOINT, COMPUTE_ONLY, ENERGY_ONLY, NO_BATTERY, NO_ROUTING, NO_CARBON)
ENERGY_STAGE_GAP = 1e-6


class BaselineInfeasible(RuntimeError):
    """A stage of a decomposition has no feasible completion."""


@dataclass
class EvaluatedSolution:
    method: str
    solution: Solution | None
    metrics: Metrics | None
    report: SolveReport  # the last MILP solved by the method
    joint_feasible: bool
    check: ConstraintReport | None = None
    wall_time_s: float = 0.0
    solver_objective_comparable: bool = True  # solver objective equals the full objective
    stages: list[SolveReport] = field(default_factory=list)


def _evaluate(inst, method, sol, report, t0, comparable=True, stages=()):
    if sol is None:
        return EvaluatedSolution(method, None, None, report, False, None, time.perf_counter() - t0,
                                 comparable, list(stages) or [report])
    check = check_solution(inst, sol)
    return EvaluatedSolution(method, sol, compute_metrics(inst, sol), report, check.feasible, check,
                             time.perf_counter() - t0, comparable, list(stages) or [report])


def _solve_built(inst, opts, params):
    model, idx = build(inst, opts)
    rep = solve_milp(model, params)
    sol = None if rep.incumbent is None else solution_from_point(inst, idx, rep.incumbent)
    return rep, sol


def run_joint(inst: Instance, params: SolverParams | None = None) -> EvaluatedSolution:
    t0 = time.perf_counter()
    rep, sol = _solve_built(inst, BuildOptions(JOINT), params or SolverParams())
    return _evaluate(inst, JOINT, sol, rep, t0)


def run_variant(inst: Instance, kind: str, params: SolverParams | None = None) -> EvaluatedSolution:
    """Solve a restricted (no battery, no routing) or relaxed (no carbon) model."""
    if kind not in (NO_BATTERY, NO_ROUTING, NO_CARBON):
        raise ValueError(f"unknown variant {kind!r}")
    t0 = time.perf_counter()
    rep, sol = _solve_built(inst, BuildOptions(kind), params or SolverParams())
    return _evaluate(inst, kind, sol, rep, t0)


# -- compute-only -----------------------------------------------------------------

def _workload_model(inst: Instance, routing: bool = True):
    """Stage-1 MILP over u, v, w, x only; ``routing=False`` pins classes home."""
    a = inst.arrays
    home = None if routing else home_sites(inst)
    I, J, K, T = inst.dims
    dt = a.dt
    m = MilpModel(sense=MAXIMIZE, name="compute_only_stage1")
    u = np.full((I, J, T), -1)
    v = np.full((I, J, T), -1)
    w = np.full((I, J, T), -1)
    x = np.full((I, K, T), -1)
    energy_price = a.buy[None, :] * dt * (1.0 + a.alpha)  # (I, T) per kW of IT load
    for i in range(I):
        for j in range(J):
            for t in range(T):
                u[i, j, t] = m.add_variable(f"u({i}.{j}.{t})", 0, 1, BINARY,
                                            obj=a.r_tr[j] - energy_price[i, t] * a.p_tr[j])
                v[i, j, t] = m.add_variable(f"v({i}.{j}.{t})", 0, 1, BINARY)
                w[i, j, t] = m.add_variable(f"w({i}.{j}.{t})", 0, 1, BINARY)
        for k in range(K):
            if not a.feasible_pair[i, k]:
                continue
            margin = a.rev[k] - a.gpu[k] - a.sla * a.tau[i, k]
            routed = home is None or home.get(k) == i
            for t in range(T):
                x[i, k, t] = m.add_variable(f"x({i}.{k}.{t})", 0, a.demand[k, t] if routed else 0.0,
                                            obj=margin - energy_price[i, t] * a.p_inf[k])
    for j in range(J):
        for t in range(T):
            m.add_constraint(f"training_unique({j}.{t})", [(u[i, j, t], 1.0) for i in range(I)], LE, 1.0)
    for i in range(I):
        for j in range(J):
            U = int(a.u_min[j])
            for t in range(T):
                terms = [(u[i, j, t], 1.0), (v[i, j, t], -1.0), (w[i, j, t], 1.0)]
                if t > 0:
                    terms.append((u[i, j, t - 1], -1.0))
                m.add_constraint(f"transition({i}.{j}.{t})", terms, EQ, 0.0)
                window = range(t, min(t + U, T))
                m.add_constraint(f"min_up({i}.{j}.{t})",
                                 [(u[i, j, s], 1.0) for s in window] + [(v[i, j, t], -float(len(window)))],
                                 GE, 0.0)
    for k in range(K):
        for t in range(T):
            terms = [(x[i, k, t], 1.0) for i in range(I) if x[i, k, t] >= 0]
            m.add_constraint(f"demand({k}.{t})", terms, EQ, a.demand[k, t])
    for j, job in enumerate(inst.jobs):
        if job.non_preemptive:
            m.add_constraint(f"non_preemption({j})",
                             [(v[i, j, t], 1.0) for i in range(I) for t in range(T)], LE, 1.0)
    # without battery or curtailment a site can carry at most grid capacity plus local generation
    for i in range(I):
        for t in range(T):
            f = 1.0 + a.alpha[i, t]
            terms = [(u[i, j, t], f * a.p_tr[j]) for j in range(J)]
            terms += [(x[i, k, t], f * a.p_inf[k]) for k in range(K) if x[i, k, t] >= 0]
            m.add_constraint(f"capability({i}.{t})", terms, LE, a.cap[i] + a.loc[i, t])
    return m, (u, v, w, x)


def _gather(point, pos):
    return np.where(pos >= 0, point[np.maximum(pos, 0)], 0.0)


def greedy_dispatch(inst: Instance, u, v, w, x) -> Solution:
    """Energy layer for fixed workloads: local generation first, then sell or buy."""
    a = inst.arrays
    sol = Solution.zeros(inst)
    sol.u, sol.v, sol.w, sol.x = (np.asarray(z, float).copy() for z in (u, v, w, x))
    sol.p_it = np.einsum("j,ijt->it", a.p_tr, sol.u) + np.einsum("k,ikt->it", a.p_inf, sol.x)
    sol.p_tot = (1.0 + a.alpha) * sol.p_it
    net = sol.p_tot - a.loc
    sol.p_buy = np.maximum(net, 0.0)
    sol.p_sell = np.minimum(np.maximum(-net, 0.0), a.cap[:, None])
    sol.y_buy = (sol.p_buy > 0).astype(float)
    sol.y_sell = (sol.p_sell > 0).astype(float)
    sol.soc = np.repeat(a.soc_init[:, None], inst.dims[3], axis=1)
    return sol


def run_compute_only(inst: Instance, params: SolverParams | None = None,
                     routing: bool = True) -> EvaluatedSolution:
    t0 = time.perf_counter()
    model, (u, v, w, x) = _workload_model(inst, routing)
    rep = solve_milp(model, params or SolverParams())
    if rep.incumbent is None:
        if rep.status == STATUS_INFEASIBLE:
            raise BaselineInfeasible("compute-only workload stage is infeasible (unserviceable demand)")
        return _evaluate(inst, COMPUTE_ONLY, None, rep, t0, comparable=False)
    p = rep.incumbent
    sol = greedy_dispatch(inst, *(np.round(_gather(p, z)) if z is not x else _gather(p, z)
                                  for z in (u, v, w, x)))
    return _evaluate(inst, COMPUTE_ONLY, sol, rep, t0, comparable=False)


# -- energy-only ------------------------------------------------------------------

def heuristic_placement(inst: Instance):
    """Fixed workload for the energy-only method; returns (u, v, w, x)."""
    a = inst.arrays
    I, J, K, T = inst.dims
    u = np.zeros((I, J, T))
    v = np.zeros((I, J, T))
    w = np.zeros((I, J, T))
    x = np.zeros((I, K, T))
    home = home_sites(inst)
    for k in range(K):
        if k in home:
            x[home[k], k, :] = a.demand[k]
        elif np.any(a.demand[k] > 0):
            raise BaselineInfeasible(f"class {k} has demand but no latency-feasible site")
    load = np.einsum("k,ikt->it", a.p_inf, x)
    limit = a.cap[:, None] + a.loc
    for j in range(J):
        i = j % I
        U = min(int(a.u_min[j]), T)
        if U == 0:
            continue
        if np.any((1.0 + a.alpha[i, :U]) * (load[i, :U] + a.p_tr[j]) > limit[i, :U] + 1e-9):
            continue
        u[i, j, :U] = 1.0
        v[i, j, 0] = 1.0
        if U < T:
            w[i, j, U] = 1.0
        load[i, :U] += a.p_tr[j]
    return u, v, w, x


def _energy_shortfall(inst, u, x):
    """First (site, period) whose load exceeds grid, local and battery supply."""
    a = inst.arrays
    it = np.einsum("j,ijt->it", a.p_tr, u) + np.einsum("k,ikt->it", a.p_inf, x)
    excess = (1.0 + a.alpha) * it - (a.cap[:, None] + a.loc + a.pdis_max[:, None])
    bad = np.argwhere(excess > 1e-9)
    return tuple(int(z) for z in bad[0]) if len(bad) else None


def run_energy_only(inst: Instance, params: SolverParams | None = None) -> EvaluatedSolution:
    t0 = time.perf_counter()
    params = params or SolverParams()
    u, v, w, x = heuristic_placement(inst)
    where = _energy_shortfall(inst, u, x)
    if where is not None:
        raise BaselineInfeasible(f"energy-only dispatch infeasible at site {where[0]}, period {where[1]}")
    model, idx = build(inst, BuildOptions(NO_CARBON))
    fix = {}
    for name, val in (("u", u), ("v", v), ("w", w), ("x", x)):
        pos = getattr(idx, name)
        mask = pos >= 0
        fix.update(zip(pos[mask].tolist(), val[mask].tolist()))
    stage = replace(params, rel_gap=min(params.rel_gap, ENERGY_STAGE_GAP))
    rep = solve_milp(model.fixed(fix), stage)
    if rep.incumbent is None:
        if rep.status == STATUS_INFEASIBLE:
            raise BaselineInfeasible("energy-only dispatch infeasible (battery cannot close the balance)")
        return _evaluate(inst, ENERGY_ONLY, None, rep, t0)
    return _evaluate(inst, ENERGY_ONLY, solution_from_point(inst, idx, rep.incumbent), rep, t0)


# -- emission floor -----------------------------------------------------------------

def minimum_emissions(inst: Instance, routing: bool = True) -> float:
    """Least grid-import emissions that serve all inference demand with no
    training; ``routing=False`` keeps every class at its home site.

    Solved as an LP: dropping the grid flags cannot lower the optimum because
    simultaneous import and export never reduces imports.
    """
    uncapped = replace(inst, economics=replace(inst.economics, carbon_budget_kg=math.inf))
    model, idx = build(uncapped, BuildOptions(JOINT if routing else NO_ROUTING))
    a = inst.arrays
    m = model.fixed({int(j): 0.0 for name in ("u", "v", "w") for j in getattr(idx, name).ravel()})
    m.objective = {}
    for i in range(inst.dims[0]):
        for t in range(inst.dims[3]):
            if a.rho[i, t]:
                m.objective[int(idx.p_buy[i, t])] = -a.rho[i, t] * a.dt
    res = solve_lp(m)
    if res.status != OPTIMAL:
        raise BaselineInfeasible(f"no feasible way to serve inference demand ({res.status})")
    return max(0.0, -res.objective)


def run_method(inst: Instance, method: str, params: SolverParams | None = None) -> EvaluatedSolution:
    if method == JOINT:
        return run_joint(inst, params)
    if method == COMPUTE_ONLY:
        return run_compute_only(inst, params)
    if method == ENERGY_ONLY:
        return run_energy_only(inst, params)
    return run_variant(inst, method, params)
