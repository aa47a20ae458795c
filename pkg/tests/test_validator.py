import dataclasses
import json
import math

import numpy as np
import pytest

from prosumer_milp.baselines import run_joint
from prosumer_milp.bnb import SolverParams
from prosumer_milp.validator import (FAMILIES, INCIDENCE, TERMS, ShapeError, Solution, check_solution,
                                     compute_metrics, load_solution, save_solution)

from conftest import MUTATIONS, make_instance, mutation_case, tiny_instance


def test_known_point_is_feasible(mutation):
    inst, sol = mutation
    rep = check_solution(inst, sol)
    assert rep.feasible and rep.diagnostics == []


def test_idle_on_zero_demand_instance():
    inst = make_instance(T=4)
    rep = check_solution(inst, Solution.idle(inst))
    assert rep.feasible


def test_plus_one_kw_purchase_flags_balance(mutation):
    inst, sol = mutation
    sol.p_buy[0, 1] += 1.0
    rep = check_solution(inst, sol)
    assert rep.families() <= {"eq4", "eq16"} and "eq4" in rep.families()
    assert [f.location for f in rep.by_family()["eq4"]] == [(0, 1)]
    assert rep.by_family()["eq4"][0].residual == pytest.approx(1.0)


def test_both_grid_flags_set(mutation):
    inst, sol = mutation
    sol.y_sell[0, 0] = 1.0
    rep = check_solution(inst, sol)
    assert rep.families() == {"eq7"}
    assert [d.family for d in rep.diagnostics] == ["simultaneous_buy_sell_flags"]


@pytest.mark.parametrize("family", sorted(MUTATIONS))
def test_mutation_flags_predicted_families(family):
    field, mutate, expected = MUTATIONS[family]
    inst, sol = mutation_case()
    mutate(sol)
    flagged = check_solution(inst, sol).families()
    assert flagged == expected
    # every companion family shares the mutated field
    assert all(field in INCIDENCE[f] for f in flagged)


def test_mutation_table_covers_all_model_families():
    assert set(MUTATIONS) == {f"eq{n}" for n in range(2, 17)} | {"non_preemption"}


def test_bounds_integrality_and_terminal_families(mutation):
    inst, sol = mutation
    bad = sol.copy()
    bad.u[0, 0, 0] = 0.5
    assert "integrality" in check_solution(inst, bad).families()
    bad = sol.copy()
    bad.x[1, 1, 0] = -1.0
    bad.x[0, 1, 0] = 5.0
    assert "bounds" in check_solution(inst, bad).families()
    bad = sol.copy()
    bad.soc[0] = [6, 6, 4]
    bad.p_dis[0, 2] = 2.0
    bad.p_buy[0, 2] = 0.0
    bad.p_sell[0, 2] = 2.0
    bad.y_sell[0, 2] = 1.0
    assert check_solution(inst, bad).feasible
    assert check_solution(inst, bad, terminal_soc=True).families() == {"terminal_soc"}


def test_nan_counts_as_violation(mutation):
    inst, sol = mutation
    sol.p_sell[1, 2] = math.nan
    assert "eq4" in check_solution(inst, sol).families()


def test_simultaneous_charge_discharge_is_diagnostic(mutation):
    inst, sol = mutation
    # charge and discharge 1 kW together; efficiency 1 keeps SOC and balance intact
    sol.p_chg[1, 0] = 1.0
    sol.p_dis[1, 0] = 1.0
    rep = check_solution(inst, sol)
    assert rep.feasible
    assert [d.family for d in rep.diagnostics] == ["simultaneous_charge_discharge"]


def test_budget_toggle_and_emission_consistency(mutation):
    inst, sol = mutation
    em = compute_metrics(inst, sol).emissions_kg
    assert em == pytest.approx(0.5 * 31)
    for budget in (em - 1.0, em, em + 1.0):
        tight = dataclasses.replace(inst, economics=dataclasses.replace(inst.economics,
                                                                        carbon_budget_kg=budget))
        flagged = "eq16" in check_solution(tight, sol).families()
        assert flagged == (em > budget + 1e-6 * max(1.0, budget))
        assert "eq16" not in check_solution(tight, sol, enforce_budget=False).families()


def test_shape_mismatch_raises(mutation):
    inst, sol = mutation
    sol.x = np.zeros((2, 1, 3))
    with pytest.raises(ShapeError, match="x: shape"):
        check_solution(inst, sol)
    with pytest.raises(ShapeError):
        compute_metrics(inst, sol)


def test_report_and_solution_serialise(mutation):
    inst, sol = mutation
    assert load_solution(save_solution(sol)).to_dict() == sol.to_dict()
    sol.p_sell[1, 0] += 1
    doc = json.loads(json.dumps(check_solution(inst, sol).to_dict()))
    assert doc["feasible"] is False
    assert doc["violations"][0]["family"] == "eq4"
    with pytest.raises(ShapeError):
        Solution.from_dict({"u": []})


def test_zero_solution_metrics_are_zero(mutation):
    inst, _ = mutation
    m = compute_metrics(inst, Solution.zeros(inst))
    assert m.objective_total == 0.0 and m.emissions_kg == 0.0
    assert set(m.objective_terms) == set(TERMS)
    assert all(v == 0.0 for v in m.objective_terms.values())


def test_single_unit_metrics(mutation):
    inst, _ = mutation
    sol = Solution.zeros(inst)
    sol.x[1, 1, 2] = 1.0
    terms = compute_metrics(inst, sol).objective_terms
    assert terms["inference_margin"] == pytest.approx(3.0 - 0.5)
    assert terms["sla_penalty"] == pytest.approx(-0.001 * 20.0)


def test_energy_term_arithmetic(mutation):
    inst, sol = mutation
    m = compute_metrics(inst, sol, detail=True)
    t = m.objective_terms
    assert t["energy_purchases"] == pytest.approx(-(16 + 15))
    assert t["energy_sales"] == pytest.approx(0.5 * 26 * 3)
    assert t["degradation"] == pytest.approx(-0.01 * 1)
    assert t["training_reward"] == pytest.approx(10.0)
    assert t["inference_margin"] == pytest.approx(2 * 3 * 1.0 + 4 * 3 * 2.5)
    assert t["sla_penalty"] == pytest.approx(-0.001 * (6 * 10.0 + 12 * 20.0))
    assert m.objective_total == pytest.approx(math.fsum(t.values()), rel=1e-12)
    assert m.per_site_series["emissions_kg"][0][0] == pytest.approx(8.0)


def test_period_length_scales_energy_terms(mutation):
    inst, sol = mutation
    half = dataclasses.replace(inst, time=dataclasses.replace(inst.time, period_hours=0.5))
    a, b = compute_metrics(inst, sol), compute_metrics(half, sol)
    assert b.emissions_kg == pytest.approx(a.emissions_kg / 2)
    assert b.objective_terms["energy_sales"] == pytest.approx(a.objective_terms["energy_sales"] / 2)
    assert b.objective_terms["inference_margin"] == a.objective_terms["inference_margin"]


def test_metrics_match_solver_objective():
    inst = tiny_instance(106)
    ev = run_joint(inst, SolverParams(rel_gap=1e-9))
    assert ev.metrics.objective_total == pytest.approx(ev.report.objective, rel=1e-6)
    assert ev.check.feasible


def test_family_list_is_complete():
    assert set(INCIDENCE) == set(FAMILIES)
