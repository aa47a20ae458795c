"""Shared fixtures: small hand-built instances with known feasible points."""

from __future__ import annotations

import math

import numpy as np
import pytest

from prosumer_milp.instance import (BatterySpec, Economics, InferenceClassSpec, Instance, LatencyMatrix,
                                    SiteSpec, TimeGrid, TrainingJobSpec)
from prosumer_milp.scenarios import GenConfig, generate
from prosumer_milp.validator import Solution


def battery(soc_max=10.0, rate=5.0, init=None, eff=1.0):
    return BatterySpec(eff, eff, 0.0, soc_max, rate, rate, init)


def make_instance(T=3, sites=None, jobs=(), classes=(), buy=None, sell=None, deg=0.0, sla=0.0,
                  e_max=math.inf, latency=None, cap_ms=50.0, dt=1.0, terminal=False):
    """Assemble an Instance with sensible defaults for anything omitted."""
    if sites is None:
        sites = (SiteSpec("s0", 100.0, (0.0,) * T, (0.0,) * T, (0.5,) * T, battery()),)
    buy = tuple(buy) if buy is not None else (1.0,) * T
    sell = tuple(sell) if sell is not None else tuple(0.5 * b for b in buy)
    if latency is None:
        latency = tuple(tuple(10.0 for _ in classes) for _ in sites)
    return Instance(TimeGrid(T, dt), tuple(sites), tuple(jobs), tuple(classes),
                    Economics(buy, sell, deg, sla, e_max), LatencyMatrix(latency, cap_ms), terminal)


def mutation_case():
    """Two sites, three periods, one non-preemptive job and two classes.

    Class ``z`` draws no power and may only use site 0, so moving its units
    touches the routing rows alone.  Site 1 exports its local surplus, site 0
    imports, and the site-0 battery sits strictly inside its bounds.
    """
    T = 3
    sites = (
        SiteSpec("s0", 100.0, (0.0,) * T, (0.5,) * T, (0.5,) * T, battery(init=5.0)),
        SiteSpec("s1", 100.0, (30.0,) * T, (0.0,) * T, (0.2,) * T, battery(init=5.0)),
    )
    jobs = (TrainingJobSpec("job", 10.0, 2, 5.0, True),)
    classes = (
        InferenceClassSpec("z", 1.0, 0.0, 0.0, (2.0,) * T),
        InferenceClassSpec("c", 3.0, 0.5, 1.0, (4.0,) * T),
    )
    inst = make_instance(T, sites, jobs, classes, buy=(1.0,) * T, sell=(0.5,) * T, deg=0.01, sla=0.001,
                         e_max=20.0, latency=((10.0, 10.0), (100.0, 20.0)), cap_ms=50.0)
    sol = Solution.zeros(inst)
    sol.u[0, 0] = [1, 1, 0]
    sol.v[0, 0] = [1, 0, 0]
    sol.w[0, 0] = [0, 0, 1]
    sol.x[0, 0] = 2.0
    sol.x[1, 1] = 4.0
    sol.p_it[0] = [10, 10, 0]
    sol.p_tot[0] = [15, 15, 0]
    sol.p_chg[0] = [1, 0, 0]
    sol.soc[0] = [6, 6, 6]
    sol.p_buy[0] = [16, 15, 0]
    sol.y_buy[0] = [1, 1, 0]
    sol.p_it[1] = 4.0
    sol.p_tot[1] = 4.0
    sol.soc[1] = 5.0
    sol.p_sell[1] = 26.0
    sol.y_sell[1] = 1.0
    return inst, sol


def tiny_instance(seed: int):
    """Seeded instance small enough for exhaustive enumeration."""
    return generate(GenConfig(seed=seed, num_sites=2, num_periods=4, num_jobs=2, num_classes=1))


@pytest.fixture
def mutation():
    return mutation_case()


@pytest.fixture(scope="session")
def default_instance():
    return generate(GenConfig(seed=1))


def random_lp_model(rng: np.random.Generator, n: int, m: int, sense="maximize"):
    """Random LP mixing free, boxed and half-bounded columns and all row senses."""
    from prosumer_milp.milp import EQ, GE, LE, MilpModel
    model = MilpModel(sense=sense)
    for j in range(n):
        lo = float(rng.choice([0.0, -1.0, -np.inf]))
        hi = float(rng.choice([2.0, 5.0, np.inf]))
        model.add_variable(f"x{j}", lo, hi, obj=float(rng.normal()))
    for i in range(m):
        terms = [(j, float(rng.normal())) for j in range(n) if rng.random() < 0.5]
        model.add_constraint(f"r{i}", terms, str(rng.choice([LE, GE, EQ], p=[0.5, 0.3, 0.2])),
                             float(rng.normal() * 3))
    return model


def dual_objective(model, res):
    """Dual objective assembled from row duals and reduced costs at active bounds."""
    c, A, lo, hi, lb, ub, _ = model.to_arrays()
    total = 0.0
    for i, y in enumerate(res.dual):
        if y != 0.0:
            total += y * (lo[i] if np.isclose(res.row_activity[i], lo[i]) else hi[i])
    for j, d in enumerate(res.reduced_costs):
        if d != 0.0:
            total += d * (lb[j] if np.isclose(res.primal[j], lb[j]) else ub[j])
    return total


def _set(field, index, value=None, delta=None):
    def apply(sol):
        arr = getattr(sol, field)
        arr[index] = arr[index] + delta if delta is not None else value
    return apply


def _shift(field, src, dst, amount):
    def apply(sol):
        arr = getattr(sol, field)
        arr[src] -= amount
        arr[dst] += amount
    return apply


# target family -> (field, mutation on mutation_case's solution, families expected to flag).
# Where the mutated field also sits in an equality row of another family, that row
# breaks too; the expected set then names the companions explicitly.
MUTATIONS = {
    "eq2": ("x", _shift("x", (1, 1, 0), (0, 1, 0), 1.0), {"eq2"}),
    "eq3": ("p_tot", _set("p_tot", (0, 0), delta=1.0), {"eq3", "eq4"}),
    "eq4": ("p_sell", _set("p_sell", (1, 0), delta=1.0), {"eq4"}),
    "eq5": ("y_buy", _set("y_buy", (0, 0), 0.0), {"eq5"}),
    "eq6": ("y_sell", _set("y_sell", (1, 0), 0.0), {"eq6"}),
    "eq7": ("y_sell", _set("y_sell", (0, 0), 1.0), {"eq7"}),
    "eq8": ("u", _set("u", (1, 0, 0), 1.0), {"eq2", "eq8", "eq9"}),
    "eq9": ("w", _set("w", (0, 0, 0), 1.0), {"eq9"}),
    "eq10": ("u", _set("u", (0, 0, 1), 0.0), {"eq2", "eq9", "eq10"}),
    "eq11": ("x", _set("x", (0, 0, 0), delta=1.0), {"eq11"}),
    "eq12": ("x", _shift("x", (0, 0, 0), (1, 0, 0), 2.0), {"eq12"}),
    "eq13": ("soc", _set("soc", (0, 1), 7.0), {"eq13"}),
    "eq14": ("soc", _set("soc", (0, 2), 11.0), {"eq13", "eq14"}),
    "eq15": ("p_chg", _set("p_chg", (0, 2), 6.0), {"eq4", "eq13", "eq15"}),
    "eq16": ("p_buy", _set("p_buy", (0, 0), delta=10.0), {"eq4", "eq16"}),
    "non_preemption": ("v", _set("v", (0, 0, 2), 1.0), {"eq9", "eq10", "non_preemption"}),
}


# acceptance lines, filled by test_acceptance and printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
