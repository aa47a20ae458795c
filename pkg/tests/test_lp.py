import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from prosumer_milp.lp import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, SimplexLP, solve_lp
from prosumer_milp.milp import GE, LE, MAXIMIZE, MINIMIZE, MilpModel, evaluate

from conftest import dual_objective, random_lp_model


def highs(model):
    """Reference optimum from scipy's HiGHS (in the model's own sense)."""
    c, A, lo, hi, lb, ub, _ = model.to_arrays()
    sign = -1.0 if model.sense == MAXIMIZE else 1.0
    A = A.toarray()
    ub_rows = np.isfinite(hi)
    lb_rows = np.isfinite(lo)
    A_ub = np.vstack([A[ub_rows], -A[lb_rows]])
    b_ub = np.concatenate([hi[ub_rows], -lo[lb_rows]])
    res = linprog(sign * c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  bounds=list(zip(lb, ub)), method="highs")
    return {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}[res.status], (sign * res.fun if res.status == 0 else None)


def farkas_proves_infeasible(model, y):
    """True when no x in the box can meet the row box along direction ``y``."""
    c, A, lo, hi, lb, ub, _ = model.to_arrays()
    y = np.where(np.abs(y) < 1e-10, 0.0, y)
    z = A.T @ y
    z = np.where(np.abs(z) < 1e-9, 0.0, z)

    def span(v, l, u):
        low = np.where(v > 0, v * np.where(v > 0, l, 0), v * np.where(v < 0, u, 0))
        high = np.where(v > 0, v * np.where(v > 0, u, 0), v * np.where(v < 0, l, 0))
        return low.sum(), high.sum()

    xlo, xhi = span(z, lb, ub)
    rlo, rhi = span(y, lo, hi)
    return xlo - rhi > 1e-9 or rlo - xhi > 1e-9


def test_one_variable():
    m = MilpModel()
    x = m.add_variable("x", obj=1.0)
    m.add_constraint("cap", [(x, 1.0)], LE, 3.0)
    res = solve_lp(m)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(3.0)
    assert res.primal[0] == pytest.approx(3.0)


def test_triangle():
    m = MilpModel()
    x = m.add_variable("x", obj=1.0)
    y = m.add_variable("y", obj=1.0)
    m.add_constraint("sum", [(x, 1.0), (y, 1.0)], LE, 1.0)
    res = solve_lp(m)
    assert res.objective == pytest.approx(1.0)
    assert res.primal.sum() == pytest.approx(1.0)


def test_infeasible_has_certificate():
    m = MilpModel()
    x = m.add_variable("x", 0, 1)
    m.add_constraint("low", [(x, 1.0)], GE, 2.0)
    res = solve_lp(m)
    assert res.status == INFEASIBLE
    assert farkas_proves_infeasible(m, res.farkas)


def test_unbounded_has_ray():
    m = MilpModel()
    x = m.add_variable("x", obj=1.0)
    y = m.add_variable("y", obj=1.0)
    m.add_constraint("r", [(x, 1.0), (y, -1.0)], LE, 1.0)
    res = solve_lp(m)
    assert res.status == UNBOUNDED
    d = res.ray
    assert d @ np.array([1.0, 1.0]) > 0
    assert d[0] - d[1] <= 1e-9 and np.all(d >= -1e-12)


def test_crossed_bounds_is_infeasible():
    lp = SimplexLP(np.zeros(1), np.zeros((0, 1)), np.zeros(0), np.zeros(0), [2.0], [1.0])
    assert lp.solve().status == INFEASIBLE


def test_iteration_limit_flags_non_conclusive():
    m = random_lp_model(np.random.default_rng(4), 30, 20)
    res = solve_lp(m, max_iters=1)
    if res.status == ITERATION_LIMIT:
        assert not res.conclusive


@pytest.mark.parametrize("seed", range(40))
def test_random_lp_matches_highs(seed):
    rng = np.random.default_rng(seed)
    model = random_lp_model(rng, int(rng.integers(2, 12)), int(rng.integers(1, 10)),
                            MAXIMIZE if seed % 2 else MINIMIZE)
    res = solve_lp(model)
    status, ref = highs(model)
    assert res.status == status
    if status == OPTIMAL:
        assert res.objective == pytest.approx(ref, rel=1e-7, abs=1e-7)
        assert evaluate(model, res.primal, 1e-8)["violations"] == []
        assert dual_objective(model, res) == pytest.approx(res.objective, rel=1e-7, abs=1e-7)
    elif status == INFEASIBLE:
        assert farkas_proves_infeasible(model, res.farkas)
    else:
        c, A, lo, hi, lb, ub, _ = model.to_arrays()
        d = res.ray
        sign = 1.0 if model.sense == MAXIMIZE else -1.0
        assert sign * (c @ d) > 0
        Ad = A @ d
        assert np.all((Ad <= 1e-9) | np.isinf(hi)) and np.all((Ad >= -1e-9) | np.isinf(lo))
        assert np.all((d <= 1e-9) | np.isinf(ub)) and np.all((d >= -1e-9) | np.isinf(lb))


def test_reduced_cost_signs_at_optimum():
    rng = np.random.default_rng(11)
    for _ in range(20):
        model = random_lp_model(rng, 8, 6)
        res = solve_lp(model)
        if res.status != OPTIMAL:
            continue
        c, A, lo, hi, lb, ub, _ = model.to_arrays()
        assert np.allclose(c - A.T @ res.dual, res.reduced_costs, atol=1e-7)
        at_lb = np.isclose(res.primal, lb) & ~np.isclose(res.primal, ub)
        at_ub = np.isclose(res.primal, ub) & ~np.isclose(res.primal, lb)
        between = ~(np.isclose(res.primal, lb) | np.isclose(res.primal, ub))
        # maximisation: raising a variable at its lower bound must not help
        assert np.all(res.reduced_costs[at_lb] <= 1e-7)
        assert np.all(res.reduced_costs[at_ub] >= -1e-7)
        assert np.all(np.abs(res.reduced_costs[between]) <= 1e-7)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2 ** 32 - 1), scale=st.floats(0.01, 100.0))
def test_scaling_and_determinism(seed, scale):
    rng = np.random.default_rng(seed)
    model = random_lp_model(rng, 6, 4)
    res = solve_lp(model)
    again = solve_lp(model)
    assert res.status == again.status and res.iterations == again.iterations
    if res.status != OPTIMAL:
        return
    assert np.array_equal(res.primal, again.primal)
    scaled = model.copy()
    for j, a in list(model.objective.items()):
        scaled.set_objective(j, scale * a)
    res2 = solve_lp(scaled)
    assert res2.objective == pytest.approx(scale * res.objective, rel=1e-7, abs=1e-7)
    # the original optimum stays optimal under the scaled objective
    c2 = scaled.to_arrays()[0]
    assert c2 @ res.primal == pytest.approx(res2.objective, rel=1e-7, abs=1e-7)


def test_degenerate_lp_terminates():
    # many redundant tight rows through the origin
    m = MilpModel()
    xs = [m.add_variable(f"x{j}", obj=1.0) for j in range(6)]
    for i in range(30):
        m.add_constraint(f"r{i}", [(x, float((i * 7 + j) % 5 + 1)) for j, x in enumerate(xs)], LE, 0.0)
    m.add_constraint("cap", [(x, 1.0) for x in xs], LE, 1.0)
    res = solve_lp(m)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(0.0, abs=1e-9)


def test_warm_start_reuses_basis():
    rng = np.random.default_rng(2)
    model = random_lp_model(rng, 10, 6)
    while solve_lp(model).status != OPTIMAL:
        model = random_lp_model(rng, 10, 6)
    res = solve_lp(model)
    lp = SimplexLP.from_model(model)
    warm = lp.solve(basis=res.basis)
    assert warm.objective == pytest.approx(res.objective, abs=1e-9)
    assert warm.iterations <= 1
