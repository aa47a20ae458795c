"""Translate an :class:`Instance` into the joint compute-power MILP.

Every row carries the tag of the equation family it implements (``eq2`` ..
``eq16``, or ``extension`` for the non-preemption and terminal-SOC rows).
Families enforced through variable bounds are tagged on the variables
(``eq14`` on SOC, ``eq15`` on charge/discharge); ``eq12`` is structural: no
routing variable is created for a latency-infeasible pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .instance import Instance
from .milp import BINARY, EQ, GE, LE, MAXIMIZE, MilpModel

if TYPE_CHECKING:
    from .validator import Solution

JOINT = "joint"
NO_BATTERY = "no_battery"
NO_ROUTING = "no_routing"
NO_CARBON = "no_carbon"
VARIANTS = (JOINT, NO_BATTERY, NO_ROUTING, NO_CARBON)

SITE_ROLES = ("p_buy", "p_sell", "p_chg", "p_dis", "soc", "p_it", "p_tot", "y_buy", "y_sell")

EQUATION_TAGS = tuple(f"eq{n}" for n in range(2, 17))


class InfeasibleByConstruction(ValueError):
    """Demand that no permitted site can serve."""


@dataclass
class BuildOptions:
    variant: str = JOINT
    non_preemption: bool = True
    terminal_soc: bool = False
    home_site: dict[int, int] | None = None  # class -> site, used by no_routing

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")


@dataclass
class VarIndex:
    """Variable positions by role; -1 marks a variable that does not exist."""

    u: np.ndarray  # (I, J, T)
    v: np.ndarray
    w: np.ndarray
    x: np.ndarray  # (I, K, T)
    p_buy: np.ndarray  # (I, T) for all site roles
    p_sell: np.ndarray
    p_chg: np.ndarray
    p_dis: np.ndarray
    soc: np.ndarray
    p_it: np.ndarray
    p_tot: np.ndarray
    y_buy: np.ndarray
    y_sell: np.ndarray

    def roles(self):
        return {name: getattr(self, name) for name in ("u", "v", "w", "x") + SITE_ROLES}

    def positions(self) -> np.ndarray:
        return np.concatenate([a[a >= 0].ravel() for a in self.roles().values()])


@dataclass
class PresolveSummary:
    removed_pairs: list[tuple[int, int]] = field(default_factory=list)
    tightened: int = 0
    p_buy_ub: np.ndarray | None = None  # (I,)
    p_chg_ub: np.ndarray | None = None
    p_dis_ub: np.ndarray | None = None


def home_sites(inst: Instance) -> dict[int, int]:
    """Lowest-latency feasible site per class (ties go to the lower site index)."""
    a = inst.arrays
    out = {}
    for k in range(len(inst.classes)):
        feas = np.nonzero(a.feasible_pair[:, k])[0]
        if len(feas):
            out[k] = int(feas[np.argmin(a.tau[feas, k])])
    return out


def presolve(inst: Instance, variant: str = JOINT) -> PresolveSummary:
    """Drop latency-infeasible routing pairs and tighten grid and battery bounds."""
    a = inst.arrays
    I, J, K, T = inst.dims
    summary = PresolveSummary()
    summary.removed_pairs = [(i, k) for i in range(I) for k in range(K) if not a.feasible_pair[i, k]]

    span = np.maximum(a.soc_max - a.soc_min, 0.0)
    chg_ub = np.minimum(a.pchg_max, span / (a.eta_c * a.dt))
    dis_ub = np.minimum(a.pdis_max, a.eta_d * span / a.dt)
    if variant == NO_BATTERY:
        chg_ub = np.zeros(I)
        dis_ub = np.zeros(I)
    # largest facility load each site could carry in each period
    it_max = np.full((I, T), a.p_tr.sum())
    if K:
        it_max = it_max + (a.feasible_pair.astype(float) * a.p_inf[None, :]) @ a.demand
    net = (1.0 + a.alpha) * it_max + chg_ub[:, None] - a.loc
    buy_ub = np.minimum(a.cap, np.maximum(net.max(axis=1) if T else 0.0, 0.0))
    summary.tightened = int(np.sum(buy_ub < a.cap) + np.sum(chg_ub < a.pchg_max)
                            + np.sum(dis_ub < a.pdis_max))
    summary.p_buy_ub, summary.p_chg_ub, summary.p_dis_ub = buy_ub, chg_ub, dis_ub
    return summary


def build(inst: Instance, opts: BuildOptions | None = None) -> tuple[MilpModel, VarIndex]:
    opts = opts or BuildOptions()
    a = inst.arrays
    I, J, K, T = inst.dims
    dt = a.dt
    pre = presolve(inst, opts.variant)

    if opts.variant == NO_ROUTING:
        home = opts.home_site if opts.home_site is not None else home_sites(inst)
    else:
        home = None
    for k in range(K):
        allowed = a.feasible_pair[:, k].copy()
        if home is not None:
            h = home.get(k)
            allowed[:] = False
            if h is not None and a.feasible_pair[h, k]:
                allowed[h] = True
        for t in range(T):
            if a.demand[k, t] > 0 and not allowed.any():
                raise InfeasibleByConstruction(
                    f"class {k} has demand {a.demand[k, t]} at t={t} but no permitted site")

    m = MilpModel(sense=MAXIMIZE, name=f"prosumer_{opts.variant}")
    m.metadata.update({
        "variant": opts.variant,
        "eq12": f"structural: {len(pre.removed_pairs)} routing pairs without variables",
        "eq14": "variable bounds on soc",
        "eq15": "variable bounds on p_chg, p_dis",
        "presolve_tightened": str(pre.tightened),
    })

    def grid(shape):
        return np.full(shape, -1, dtype=np.int64)

    idx = VarIndex(u=grid((I, J, T)), v=grid((I, J, T)), w=grid((I, J, T)), x=grid((I, K, T)),
                   **{r: grid((I, T)) for r in SITE_ROLES})

    for i in range(I):
        for j in range(J):
            for t in range(T):
                idx.u[i, j, t] = m.add_variable(f"u({i}.{j}.{t})", 0, 1, BINARY, obj=a.r_tr[j])
                idx.v[i, j, t] = m.add_variable(f"v({i}.{j}.{t})", 0, 1, BINARY)
                idx.w[i, j, t] = m.add_variable(f"w({i}.{j}.{t})", 0, 1, BINARY)
        for k in range(K):
            if not a.feasible_pair[i, k]:
                continue
            margin = (a.rev[k] - a.gpu[k]) - a.sla * a.tau[i, k]
            routed = home is None or home.get(k) == i
            for t in range(T):
                ub = a.demand[k, t] if routed else 0.0
                idx.x[i, k, t] = m.add_variable(f"x({i}.{k}.{t})", 0, ub, obj=margin)
        for t in range(T):
            idx.p_buy[i, t] = m.add_variable(f"p_buy({i}.{t})", 0, pre.p_buy_ub[i], obj=-a.buy[t] * dt)
            idx.p_sell[i, t] = m.add_variable(f"p_sell({i}.{t})", 0, a.cap[i], obj=a.sell[t] * dt)
            idx.p_chg[i, t] = m.add_variable(f"p_chg({i}.{t})", 0, pre.p_chg_ub[i], tag="eq15",
                                             obj=-a.deg * dt)
            idx.p_dis[i, t] = m.add_variable(f"p_dis({i}.{t})", 0, pre.p_dis_ub[i], tag="eq15",
                                             obj=-a.deg * dt)
            idx.soc[i, t] = m.add_variable(f"soc({i}.{t})", a.soc_min[i], a.soc_max[i], tag="eq14")
            idx.p_it[i, t] = m.add_variable(f"p_it({i}.{t})")
            idx.p_tot[i, t] = m.add_variable(f"p_tot({i}.{t})")
            idx.y_buy[i, t] = m.add_variable(f"y_buy({i}.{t})", 0, 1, BINARY)
            idx.y_sell[i, t] = m.add_variable(f"y_sell({i}.{t})", 0, 1, BINARY)

    for i in range(I):
        for t in range(T):
            terms = [(idx.p_it[i, t], 1.0)]
            terms += [(idx.u[i, j, t], -a.p_tr[j]) for j in range(J)]
            terms += [(idx.x[i, k, t], -a.p_inf[k]) for k in range(K) if idx.x[i, k, t] >= 0]
            m.add_constraint(f"it_power({i}.{t})", terms, EQ, 0.0, "eq2")
            m.add_constraint(f"total_power({i}.{t})",
                             [(idx.p_tot[i, t], 1.0), (idx.p_it[i, t], -(1.0 + a.alpha[i, t]))],
                             EQ, 0.0, "eq3")
            m.add_constraint(f"balance({i}.{t})",
                             [(idx.p_buy[i, t], 1.0), (idx.p_dis[i, t], 1.0), (idx.p_tot[i, t], -1.0),
                              (idx.p_sell[i, t], -1.0), (idx.p_chg[i, t], -1.0)],
                             EQ, -a.loc[i, t], "eq4")
            m.add_constraint(f"grid_buy({i}.{t})",
                             [(idx.p_buy[i, t], 1.0), (idx.y_buy[i, t], -a.cap[i])], LE, 0.0, "eq5")
            m.add_constraint(f"grid_sell({i}.{t})",
                             [(idx.p_sell[i, t], 1.0), (idx.y_sell[i, t], -a.cap[i])], LE, 0.0, "eq6")
            m.add_constraint(f"grid_exclusive({i}.{t})",
                             [(idx.y_buy[i, t], 1.0), (idx.y_sell[i, t], 1.0)], LE, 1.0, "eq7")

    for j in range(J):
        for t in range(T):
            m.add_constraint(f"training_unique({j}.{t})", [(idx.u[i, j, t], 1.0) for i in range(I)],
                             LE, 1.0, "eq8")
    for i in range(I):
        for j in range(J):
            U = int(a.u_min[j])
            for t in range(T):
                terms = [(idx.u[i, j, t], 1.0), (idx.v[i, j, t], -1.0), (idx.w[i, j, t], 1.0)]
                if t > 0:
                    terms.append((idx.u[i, j, t - 1], -1.0))
                m.add_constraint(f"transition({i}.{j}.{t})", terms, EQ, 0.0, "eq9")
            for t in range(T):
                window = range(t, min(t + U, T))
                terms = [(idx.u[i, j, s], 1.0) for s in window]
                terms.append((idx.v[i, j, t], -float(len(window))))
                m.add_constraint(f"min_up({i}.{j}.{t})", terms, GE, 0.0, "eq10")

    for k in range(K):
        for t in range(T):
            terms = [(idx.x[i, k, t], 1.0) for i in range(I) if idx.x[i, k, t] >= 0]
            m.add_constraint(f"demand({k}.{t})", terms, EQ, a.demand[k, t], "eq11")

    for i in range(I):
        for t in range(T):
            terms = [(idx.soc[i, t], 1.0), (idx.p_chg[i, t], -a.eta_c[i] * dt),
                     (idx.p_dis[i, t], dt / a.eta_d[i])]
            rhs = 0.0
            if t > 0:
                terms.append((idx.soc[i, t - 1], -1.0))
            else:
                rhs = a.soc_init[i]
            m.add_constraint(f"soc({i}.{t})", terms, EQ, rhs, "eq13")

    if opts.variant != NO_CARBON and np.isfinite(a.e_max):
        terms = [(idx.p_buy[i, t], a.rho[i, t] * dt) for i in range(I) for t in range(T)]
        m.add_constraint("carbon_budget", terms, LE, a.e_max, "eq16")

    if opts.non_preemption:
        for j, job in enumerate(inst.jobs):
            if job.non_preemptive:
                m.add_constraint(f"non_preemption({j})",
                                 [(idx.v[i, j, t], 1.0) for i in range(I) for t in range(T)],
                                 LE, 1.0, "extension")
    if opts.terminal_soc or inst.enforce_terminal_soc:
        for i in range(I):
            if T:
                m.add_constraint(f"terminal_soc({i})", [(idx.soc[i, T - 1], 1.0)], GE,
                                 a.soc_init[i], "extension")
    return m, idx


def solution_from_point(inst: Instance, idx: VarIndex, point) -> Solution:
    """Scatter a model point into a :class:`Solution`; absent variables read 0.

    Binary entries are rounded to exact 0/1 when within the integrality
    tolerance so the validator sees clean flags.
    """
    from .validator import BINARY_FIELDS, Solution

    x = np.asarray(point, dtype=float)
    fields = {}
    for name, pos in idx.roles().items():
        arr = np.where(pos >= 0, x[np.maximum(pos, 0)], 0.0)
        if name in BINARY_FIELDS:
            r = np.round(arr)
            arr = np.where(np.abs(arr - r) <= 1e-6, r, arr)
        fields[name] = arr
    return Solution(**fields)


def point_from_solution(model: MilpModel, idx: VarIndex, sol) -> np.ndarray:
    """Inverse of :func:`solution_from_point` (entries without a variable are dropped)."""
    x = np.zeros(model.num_vars)
    for name, pos in idx.roles().items():
        mask = pos >= 0
        x[pos[mask]] = getattr(sol, name)[mask]
    return x
