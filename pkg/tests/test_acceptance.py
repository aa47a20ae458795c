"""Acceptance criteria 1-10, one test each.

Every test records a single PASS/FAIL line (printed in the terminal summary)
before asserting, so a failing criterion still reports what it measured.
"""

import dataclasses
import subprocess
import sys
import time

import numpy as np
import pytest

from prosumer_milp.baselines import minimum_emissions, run_joint, run_method
from prosumer_milp.bnb import STATUS_OPTIMAL, STATUS_TIME_LIMIT, SolverParams, relative_gap, solve_milp
from prosumer_milp.builder import build
from prosumer_milp.harness import enumeration_oracle, knapsack_oracle
from prosumer_milp.lp import OPTIMAL, solve_lp
from prosumer_milp.milp import EQ, GE, LE, MAXIMIZE, MINIMIZE, MilpModel
from prosumer_milp.mps import export_mps, import_mps
from prosumer_milp.scenarios import GenConfig, generate, generate_knapsack_case, generate_uncapped
from prosumer_milp.validator import INCIDENCE, check_solution, compute_metrics

from conftest import ACCEPTANCE, MUTATIONS, dual_objective, mutation_case, tiny_instance

ORACLE_SEEDS = range(100, 110)
EXACT = SolverParams(rel_gap=1e-9, time_limit_s=60)


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


# -- 1: knapsack reduction --------------------------------------------------------

def test_c01_knapsack_reduction():
    worst_err, worst_t, bad = 0.0, 0.0, []
    for seed in range(20):
        n = (8, 12, 15)[seed % 3]
        case = generate_knapsack_case(seed, n)
        t0 = time.perf_counter()
        model, _ = build(case.instance)
        rep = solve_milp(model, SolverParams(rel_gap=0.0, time_limit_s=30))
        elapsed = time.perf_counter() - t0
        exact = knapsack_oracle(case.values, case.weights, case.capacity)
        err = abs(rep.objective - exact)
        worst_err, worst_t = max(worst_err, err), max(worst_t, elapsed)
        if rep.status != STATUS_OPTIMAL or err > 1e-6 or elapsed >= 5.0:
            bad.append((seed, n, rep.status, err, round(elapsed, 2)))
    record(1, not bad, f"knapsack: 20 cases vs DP, max |diff| {worst_err:.1e}, "
                       f"slowest {worst_t:.2f} s, failures {bad}")


# -- 2: enumeration oracle ----------------------------------------------------------

def test_c02_enumeration_oracle():
    t0 = time.perf_counter()
    worst, bad, patterns = 0.0, [], 0
    for seed in ORACLE_SEEDS:
        inst = tiny_instance(seed)
        I, J, K, T = inst.dims
        assert I <= 2 and T <= 4 and J <= 2 and K <= 1
        oracle = enumeration_oracle(inst)
        patterns = max(patterns, oracle.patterns)
        rep = run_joint(inst, EXACT).report
        rel = abs(rep.objective - oracle.objective) / max(1.0, abs(oracle.objective))
        worst = max(worst, rel)
        if oracle.status != "optimal" or rep.status != STATUS_OPTIMAL or rel > 1e-6:
            bad.append((seed, rep.status, oracle.status, rel))
    elapsed = time.perf_counter() - t0
    record(2, not bad and elapsed < 60.0,
           f"oracle: 10 tiny instances, max rel diff {worst:.1e}, max patterns {patterns}, "
           f"{elapsed:.1f} s total, failures {bad}")


# -- 3: dominance ordering ----------------------------------------------------------

def test_c03_dominance_ordering(default_instance):
    params = SolverParams(rel_gap=0.01, time_limit_s=120)
    runs = {m: run_method(default_instance, m, params)
            for m in ("joint", "no_battery", "no_routing", "no_carbon")}
    obj = {m: ev.metrics.objective_total for m, ev in runs.items()}
    em = {m: ev.metrics.emissions_kg for m, ev in runs.items()}
    gaps = {m: ev.report.gap for m, ev in runs.items()}

    def geq(a, b):  # equal solutions may differ in the last bits
        return obj[a] >= obj[b] - 1e-6 * max(1.0, abs(obj[b]))

    ok = (all(g <= 0.01 for g in gaps.values())
          and geq("no_carbon", "joint") and geq("joint", "no_battery")
          and obj["joint"] > obj["no_routing"]
          and em["no_routing"] > em["joint"])
    summary = ", ".join(f"{m} {obj[m]:.1f}/{em[m]:.1f} kg" for m in obj)
    record(3, ok, f"dominance on default 3/24/6/3 at gap <= 1%: {summary}")


# -- 4: carbon monotonicity ---------------------------------------------------------

def test_c04_carbon_monotonicity():
    bad, rises = [], 0
    for seed in range(100, 105):
        inst = generate_uncapped(GenConfig(seed=seed, num_sites=2, num_periods=4, num_jobs=2, num_classes=1))
        free = enumeration_oracle(inst)
        e_free = compute_metrics(inst, free.solution).emissions_kg
        e_min = minimum_emissions(inst)
        objs = []
        for frac in (0.0, 0.5, 1.0):
            budget = e_min + frac * max(e_free - e_min, 0.0) + 1e-9
            capped = dataclasses.replace(inst, economics=dataclasses.replace(inst.economics,
                                                                            carbon_budget_kg=budget))
            objs.append(enumeration_oracle(capped).objective)
        if any(b < a - 1e-6 * max(1.0, abs(a)) for a, b in zip(objs, objs[1:])):
            bad.append((seed, objs))
        rises += objs[-1] > objs[0] + 1e-6
    record(4, not bad, f"carbon monotonicity: 5 instances x 3 budgets non-decreasing, "
                       f"{rises}/5 strictly rising, failures {bad}")


# -- 5: validator mutation suite ----------------------------------------------------

def test_c05_mutation_suite():
    families = {f"eq{n}" for n in range(2, 17)} | {"non_preemption"}
    inst, sol = mutation_case()
    assert check_solution(inst, sol).feasible
    bad, exact, coupled = [], 0, 0
    for family in sorted(families):
        if family not in MUTATIONS:
            bad.append((family, "no mutation"))
            continue
        field, mutate, expected = MUTATIONS[family]
        inst, sol = mutation_case()
        mutate(sol)
        flagged = check_solution(inst, sol).families()
        # the target must flag; any companion is an equality row forced by the same field
        if family not in flagged or flagged != expected or not all(field in INCIDENCE[f] for f in flagged):
            bad.append((family, sorted(flagged)))
        elif flagged == {family}:
            exact += 1
        else:
            coupled += 1
    record(5, not bad, f"mutations: {len(families)} families covered, {exact} flag alone, "
                       f"{coupled} flag with incidence-forced companions, failures {bad}")


# -- 6: LP soundness ----------------------------------------------------------------

def feasible_bounded_lp(rng: np.random.Generator) -> MilpModel:
    """Random LP built around a known interior point with every column boxed."""
    n = int(rng.integers(2, 41))
    m = int(rng.integers(1, 31))
    model = MilpModel(sense=str(rng.choice([MAXIMIZE, MINIMIZE])))
    lo = rng.uniform(-5, 0, n)
    hi = lo + rng.uniform(0.5, 10, n)
    x0 = lo + rng.uniform(0, 1, n) * (hi - lo)
    for j in range(n):
        model.add_variable(f"x{j}", float(lo[j]), float(hi[j]), obj=float(rng.normal()))
    for i in range(m):
        cols = [j for j in range(n) if rng.random() < 0.4] or [int(rng.integers(n))]
        coef = rng.normal(size=len(cols))
        act = float(coef @ x0[cols])
        sense = str(rng.choice([LE, GE, EQ], p=[0.45, 0.35, 0.2]))
        slack = 0.0 if sense == EQ else float(rng.uniform(0, 2))
        rhs = act + slack if sense == LE else act - slack if sense == GE else act
        model.add_constraint(f"r{i}", list(zip(cols, coef.tolist())), sense, rhs)
    return model


def test_c06_lp_soundness():
    rng = np.random.default_rng(2024)
    worst_gap, worst_viol, bad = 0.0, 0.0, []
    for k in range(50):
        model = feasible_bounded_lp(rng)
        res = solve_lp(model)
        if res.status != OPTIMAL:
            bad.append((k, res.status))
            continue
        _, A, lo, hi, lb, ub, _ = model.to_arrays()
        act = A @ res.primal
        viol = max(np.max(np.maximum(lo - act, 0), initial=0), np.max(np.maximum(act - hi, 0), initial=0),
                   np.max(np.maximum(lb - res.primal, 0)), np.max(np.maximum(res.primal - ub, 0)))
        gap = abs(dual_objective(model, res) - res.objective)
        worst_gap = max(worst_gap, gap / max(1.0, abs(res.objective)))
        worst_viol = max(worst_viol, viol)
        if gap > 1e-7 * max(1.0, abs(res.objective)) or viol > 1e-8:
            bad.append((k, gap, viol))
    relax_bad = []
    for seed in ORACLE_SEEDS:
        inst = tiny_instance(seed)
        model, _ = build(inst)
        root = solve_lp(model)
        opt = enumeration_oracle(inst).objective
        if root.status != OPTIMAL or root.objective < opt - 1e-6 * max(1.0, abs(opt)):
            relax_bad.append((seed, root.objective, opt))
    record(6, not bad and not relax_bad,
           f"LP: 50 random LPs, max rel duality gap {worst_gap:.1e}, max violation {worst_viol:.1e}; "
           f"root bound >= oracle on 10 instances; failures {bad + relax_bad}")


# -- 7: limits honoured -------------------------------------------------------------

def test_c07_time_limit():
    cases = {"default gap 0": GenConfig(seed=1),
             "5/48/10/4": GenConfig(seed=1, num_sites=5, num_periods=48, num_jobs=10, num_classes=4)}
    notes, ok = [], True
    for label, cfg in cases.items():
        model, _ = build(generate(cfg))
        t0 = time.perf_counter()
        rep = solve_milp(model, SolverParams(rel_gap=0.0, time_limit_s=2.0))
        wall = time.perf_counter() - t0
        triple_ok = (rep.objective_lb <= rep.objective_ub
                     and rep.gap == relative_gap(rep.objective, rep.bound))
        ok &= rep.status == STATUS_TIME_LIMIT and wall <= 2.5 and triple_ok
        notes.append(f"{label}: {wall:.2f} s, lb {rep.objective_lb:.1f} ub {rep.objective_ub:.1f} "
                     f"gap {rep.gap:.1e}")
    record(7, ok, "time limit 2 s: " + "; ".join(notes))


# -- 8: MPS round trip --------------------------------------------------------------

def test_c08_mps_round_trip(default_instance):
    model, _ = build(default_instance)
    text = export_mps(model)
    back = import_mps(text)
    ok = back.structurally_equal(model) and export_mps(back) == text
    note = "external cross-check skipped"
    try:
        from scipy.optimize import Bounds, LinearConstraint, milp
        c, A, lo, hi, lb, ub, integ = back.to_arrays()
        sign = -1.0 if back.sense == MAXIMIZE else 1.0
        ext = milp(sign * c, constraints=LinearConstraint(A, lo, hi), bounds=Bounds(lb, ub),
                   integrality=np.asarray(integ, dtype=int), options={"time_limit": 60, "mip_rel_gap": 1e-6})
        ours = solve_milp(model, SolverParams(rel_gap=1e-6, time_limit_s=60)).objective
        if ext.status == 0:
            rel = abs(sign * ext.fun - ours) / max(1.0, abs(ours))
            note = f"HiGHS on the re-imported model {sign * ext.fun:.4f} vs {ours:.4f} (rel {rel:.1e}, non-gating)"
    except Exception as exc:  # optional check only
        note = f"external cross-check unavailable: {exc}"
    record(8, ok, f"MPS: {model.num_vars} columns, {model.num_rows} rows round-trip equal; {note}")


# -- 9: determinism -----------------------------------------------------------------

def test_c09_compare_is_deterministic():
    cmd = [sys.executable, "-m", "prosumer_milp", "compare", "--seed", "1", "--threads", "1", "--no-timing"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    record(9, a == b and len(a.splitlines()) == 7,
           f"compare twice on seed 1: {len(a)} bytes each, identical={a == b}")


# -- 10: scenario direction ---------------------------------------------------------

def test_c10_local_generation_rich_is_favourable():
    params = SolverParams(rel_gap=0.01, time_limit_s=120)
    rows, ok = [], True
    for seed in (1, 2, 3):
        obj = {sc: run_joint(generate(GenConfig(seed=seed, scenario=sc)), params).metrics.objective_total
               for sc in ("default", "local_gen_rich")}
        ok &= obj["local_gen_rich"] >= obj["default"]
        rows.append(f"seed {seed}: {obj['default']:.1f} -> {obj['local_gen_rich']:.1f}")
    record(10, ok, "local_gen_rich >= default joint objective: " + "; ".join(rows))


@pytest.mark.parametrize("scenario", ["inference_dominant", "peak_demand", "training_dominant"])
def test_other_scenarios_recorded(scenario):
    """Not an acceptance gate: solve and record status, gap and objective."""
    ev = run_joint(generate(GenConfig(seed=1, scenario=scenario)), SolverParams(rel_gap=0.01, time_limit_s=60))
    print(f"{scenario}: {ev.report.status}, gap {ev.report.gap:.1e}, objective {ev.report.objective:.1f}")
    assert ev.report.objective_lb <= ev.report.objective_ub


def test_energy_only_position_recorded(default_instance):
    """Not an acceptance gate: where energy-only lands against no_routing and joint."""
    params = SolverParams(rel_gap=0.01, time_limit_s=120)
    obj = {m: run_method(default_instance, m, params).metrics.objective_total
           for m in ("energy_only", "no_routing", "joint")}
    between = obj["no_routing"] <= obj["energy_only"] <= obj["joint"]
    print(f"energy_only {obj['energy_only']:.1f}, no_routing {obj['no_routing']:.1f}, "
          f"joint {obj['joint']:.1f}; between: {between}")
    assert obj["energy_only"] <= obj["joint"] + 0.01 * abs(obj["joint"])
