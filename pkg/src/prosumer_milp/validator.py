"""Solver-independent solution checks and objective/emission accounting.

Everything here is re-derived from the :class:`Instance`.  The built MILP and
its variable index are never consulted, so a bug in the builder cannot
certify its own output.  Rows are checked in the same algebraic form the
builder uses, with the shared tolerance rule from :mod:`prosumer_milp.milp`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance
from .milp import FEAS_TOL

SITE_FIELDS = ("p_buy", "p_sell", "p_chg", "p_dis", "soc", "p_it", "p_tot", "y_buy", "y_sell")
FIELDS = ("u", "v", "w", "x") + SITE_FIELDS
BINARY_FIELDS = ("u", "v", "w", "y_buy", "y_sell")

FAMILIES = tuple(f"eq{n}" for n in range(2, 17)) + (
    "non_preemption", "terminal_soc", "bounds", "integrality")

# Solution fields appearing in each family's rows (used to reason about mutations).
INCIDENCE = {
    "eq2": {"p_it", "u", "x"},
    "eq3": {"p_tot", "p_it"},
    "eq4": {"p_buy", "p_dis", "p_tot", "p_sell", "p_chg"},
    "eq5": {"p_buy", "y_buy"},
    "eq6": {"p_sell", "y_sell"},
    "eq7": {"y_buy", "y_sell"},
    "eq8": {"u"},
    "eq9": {"u", "v", "w"},
    "eq10": {"u", "v"},
    "eq11": {"x"},
    "eq12": {"x"},
    "eq13": {"soc", "p_chg", "p_dis"},
    "eq14": {"soc"},
    "eq15": {"p_chg", "p_dis"},
    "eq16": {"p_buy"},
    "non_preemption": {"v"},
    "terminal_soc": {"soc"},
    "bounds": {"x", "p_buy", "p_sell"},
    "integrality": set(BINARY_FIELDS),
}


class ShapeError(ValueError):
    pass


@dataclass
class Solution:
    """Decision values; ``u, v, w`` are (site, job, period), ``x`` is
    (site, class, period) and every site quantity is (site, period)."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    x: np.ndarray
    p_buy: np.ndarray
    p_sell: np.ndarray
    p_chg: np.ndarray
    p_dis: np.ndarray
    soc: np.ndarray
    p_it: np.ndarray
    p_tot: np.ndarray
    y_buy: np.ndarray
    y_sell: np.ndarray

    def __post_init__(self):
        for name in FIELDS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    @classmethod
    def zeros(cls, inst: Instance) -> "Solution":
        I, J, K, T = inst.dims
        return cls(np.zeros((I, J, T)), np.zeros((I, J, T)), np.zeros((I, J, T)), np.zeros((I, K, T)),
                   **{f: np.zeros((I, T)) for f in SITE_FIELDS})

    @classmethod
    def idle(cls, inst: Instance) -> "Solution":
        """Nothing runs, the battery rests at its initial charge and local
        generation is exported.  Feasible only if generation never exceeds
        grid capacity (there is no curtailment)."""
        sol = cls.zeros(inst)
        a = inst.arrays
        sol.soc[:] = a.soc_init[:, None]
        sol.p_sell = a.loc.copy()
        sol.y_sell = (a.loc > 0).astype(float)
        return sol

    def copy(self) -> "Solution":
        return Solution(**{f: getattr(self, f).copy() for f in FIELDS})

    def shape_errors(self, inst: Instance) -> list[str]:
        I, J, K, T = inst.dims
        want = {"u": (I, J, T), "v": (I, J, T), "w": (I, J, T), "x": (I, K, T)}
        want.update({f: (I, T) for f in SITE_FIELDS})
        return [f"{f}: shape {getattr(self, f).shape}, expected {want[f]}"
                for f in FIELDS if getattr(self, f).shape != want[f]]

    def to_dict(self) -> dict:
        doc = {f: getattr(self, f).tolist() for f in FIELDS}
        # nested lists cannot express empty axes such as a job-free instance
        doc["shapes"] = {f: list(getattr(self, f).shape) for f in FIELDS}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Solution":
        missing = [f for f in FIELDS if f not in doc]
        if missing:
            raise ShapeError(f"solution document lacks fields {missing}")
        shapes = doc.get("shapes", {})
        out = {}
        for f in FIELDS:
            arr = np.array(doc[f], dtype=float)
            if f in shapes and arr.size == 0:
                arr = arr.reshape(shapes[f])
            out[f] = arr
        return cls(**out)


def save_solution(sol: Solution) -> str:
    return json.dumps(sol.to_dict(), indent=1, sort_keys=True) + "\n"


def load_solution(text: str) -> Solution:
    return Solution.from_dict(json.loads(text))


@dataclass(frozen=True)
class Finding:
    family: str
    location: tuple  # (i, t), (i, j, t), (j, t), (k, t) ... as named in ``message``
    residual: float
    message: str = ""


@dataclass
class ConstraintReport:
    violations: list[Finding] = field(default_factory=list)
    diagnostics: list[Finding] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def families(self) -> set[str]:
        return {f.family for f in self.violations}

    def by_family(self) -> dict[str, list[Finding]]:
        out: dict[str, list[Finding]] = {}
        for f in self.violations:
            out.setdefault(f.family, []).append(f)
        return out

    def to_dict(self) -> dict:
        def enc(f):
            return {"family": f.family, "location": list(f.location), "residual": f.residual,
                    "message": f.message}
        return {"feasible": self.feasible,
                "violations": [enc(f) for f in self.violations],
                "diagnostics": [enc(f) for f in self.diagnostics]}


def _check_rows(rep, family, lhs, rhs, sense, tol, label, index_names):
    """Record every breach of ``lhs (sense) rhs``; arrays broadcast together.

    Vectorised form of :func:`prosumer_milp.milp.allowed_violation`.
    """
    lhs, rhs = np.broadcast_arrays(np.asarray(lhs, float), np.asarray(rhs, float))
    allow = np.where(np.abs(rhs) <= 1.0, tol, tol * np.abs(rhs))
    if sense == "=":
        res = np.abs(lhs - rhs)
    elif sense == "<=":
        res = lhs - rhs
    else:
        res = rhs - lhs
    bad = ~(res <= allow)  # NaN counts as a breach
    for loc in zip(*np.nonzero(bad)):
        loc = tuple(int(v) for v in loc)
        where = ", ".join(f"{n}={v}" for n, v in zip(index_names, loc))
        rep.violations.append(Finding(family, loc, float(res[loc]), f"{label} ({where})"))


def check_solution(inst: Instance, sol: Solution, tol: float = FEAS_TOL,
                   non_preemption: bool = True, terminal_soc: bool | None = None,
                   enforce_budget: bool = True) -> ConstraintReport:
    """Check every constraint family against the instance data.

    ``enforce_budget=False`` skips the carbon budget (for solutions of the
    no-carbon variant that are not meant to respect it).
    """
    errs = sol.shape_errors(inst)
    if errs:
        raise ShapeError("; ".join(errs))
    a = inst.arrays
    I, J, K, T = inst.dims
    dt = a.dt
    rep = ConstraintReport()
    s = sol
    IT = ("i", "t")

    # eq2, eq3: facility load
    it_load = np.einsum("j,ijt->it", a.p_tr, s.u) + np.einsum("k,ikt->it", a.p_inf, s.x)
    _check_rows(rep, "eq2", s.p_it - it_load, 0.0, "=", tol, "IT power", IT)
    _check_rows(rep, "eq3", s.p_tot - (1.0 + a.alpha) * s.p_it, 0.0, "=", tol, "total power", IT)
    # eq4: P_buy + P_dis - P_tot - P_sell - P_chg = -P_loc
    _check_rows(rep, "eq4", s.p_buy + s.p_dis - s.p_tot - s.p_sell - s.p_chg, -a.loc, "=", tol,
                "energy balance", IT)
    _check_rows(rep, "eq5", s.p_buy - a.cap[:, None] * s.y_buy, 0.0, "<=", tol, "grid import", IT)
    _check_rows(rep, "eq6", s.p_sell - a.cap[:, None] * s.y_sell, 0.0, "<=", tol, "grid export", IT)
    _check_rows(rep, "eq7", s.y_buy + s.y_sell, 1.0, "<=", tol, "import/export exclusivity", IT)

    # eq8-eq10: training jobs
    _check_rows(rep, "eq8", s.u.sum(axis=0), 1.0, "<=", tol, "one site per job", ("j", "t"))
    prev = np.concatenate([np.zeros((I, J, 1)), s.u[:, :, :-1]], axis=2)
    _check_rows(rep, "eq9", s.u - prev - s.v + s.w, 0.0, "=", tol, "start/stop transition",
                ("i", "j", "t"))
    if J and T:
        window_sum = np.zeros((I, J, T))
        length = np.zeros((J, T))
        csum = np.concatenate([np.zeros((I, J, 1)), np.cumsum(s.u, axis=2)], axis=2)
        for j in range(J):
            U = int(a.u_min[j])
            for t in range(T):
                end = min(t + U, T)
                window_sum[:, j, t] = csum[:, j, end] - csum[:, j, t]
                length[j, t] = end - t
        _check_rows(rep, "eq10", window_sum - length[None] * s.v, 0.0, ">=", tol, "minimum up-time",
                    ("i", "j", "t"))
    if non_preemption and J:
        np_jobs = np.array([job.non_preemptive for job in inst.jobs])
        starts = s.v.sum(axis=(0, 2))
        _check_rows(rep, "non_preemption", np.where(np_jobs, starts, 0.0), 1.0, "<=", tol,
                    "single start", ("j",))

    # eq11, eq12: inference
    _check_rows(rep, "eq11", s.x.sum(axis=0), a.demand, "=", tol, "demand served", ("k", "t"))
    if K:
        off = np.where(a.feasible_pair[:, :, None], 0.0, s.x)
        _check_rows(rep, "eq12", np.abs(off), 0.0, "<=", tol, "latency-infeasible routing",
                    ("i", "k", "t"))

    # eq13-eq15: battery
    soc_prev = np.concatenate([a.soc_init[:, None], s.soc[:, :-1]], axis=1)
    lhs = s.soc - soc_prev - a.eta_c[:, None] * dt * s.p_chg + (dt / a.eta_d[:, None]) * s.p_dis
    _check_rows(rep, "eq13", lhs, 0.0, "=", tol, "state of charge", IT)
    _check_rows(rep, "eq14", s.soc, a.soc_min[:, None], ">=", tol, "SOC lower bound", IT)
    _check_rows(rep, "eq14", s.soc, a.soc_max[:, None], "<=", tol, "SOC upper bound", IT)
    for name, cap in (("p_chg", a.pchg_max), ("p_dis", a.pdis_max)):
        val = getattr(s, name)
        _check_rows(rep, "eq15", val, 0.0, ">=", tol, f"{name} nonnegative", IT)
        _check_rows(rep, "eq15", val, cap[:, None], "<=", tol, f"{name} rate limit", IT)
    if terminal_soc if terminal_soc is not None else inst.enforce_terminal_soc:
        if T:
            _check_rows(rep, "terminal_soc", s.soc[:, -1], a.soc_init, ">=", tol, "terminal SOC", ("i",))

    # eq16: carbon budget
    if enforce_budget and math.isfinite(a.e_max):
        em = float(np.sum(a.rho * dt * s.p_buy))
        _check_rows(rep, "eq16", np.array([em]), a.e_max, "<=", tol, "carbon budget", ("_",))

    # plain variable domains
    for name in ("x", "p_buy", "p_sell"):
        _check_rows(rep, "bounds", getattr(s, name), 0.0, ">=", tol, f"{name} nonnegative",
                    ("i", "k", "t") if name == "x" else IT)
    for name in BINARY_FIELDS:
        val = getattr(s, name)
        dist = np.minimum(np.abs(val), np.abs(val - 1.0))
        names = ("i", "j", "t") if val.ndim == 3 else IT
        _check_rows(rep, "integrality", dist, 0.0, "<=", tol, f"{name} not 0/1", names)

    # non-fatal diagnostics
    both = (s.p_chg > tol) & (s.p_dis > tol)
    for i, t in zip(*np.nonzero(both)):
        rep.diagnostics.append(Finding("simultaneous_charge_discharge", (int(i), int(t)),
                                       float(min(s.p_chg[i, t], s.p_dis[i, t])),
                                       f"battery charges and discharges (i={i}, t={t})"))
    flags = (s.y_buy > 0.5) & (s.y_sell > 0.5)
    for i, t in zip(*np.nonzero(flags)):
        rep.diagnostics.append(Finding("simultaneous_buy_sell_flags", (int(i), int(t)), 1.0,
                                       f"both grid flags set (i={i}, t={t})"))
    return rep


TERMS = ("inference_margin", "sla_penalty", "energy_sales", "energy_purchases", "degradation",
         "training_reward")


@dataclass
class Metrics:
    """Objective breakdown; each term is its signed contribution, so costs
    (SLA penalty, purchases, degradation) are non-positive and
    ``objective_total`` is their sum."""

    objective_total: float
    objective_terms: dict[str, float]
    emissions_kg: float
    per_site_series: dict[str, list] | None = None

    def to_dict(self) -> dict:
        return {"objective_total": self.objective_total, "objective_terms": dict(self.objective_terms),
                "emissions_kg": self.emissions_kg, "per_site_series": self.per_site_series}


def compute_metrics(inst: Instance, sol: Solution, detail: bool = False) -> Metrics:
    errs = sol.shape_errors(inst)
    if errs:
        raise ShapeError("; ".join(errs))
    a = inst.arrays
    dt = a.dt
    s = sol
    tau = np.where(a.feasible_pair, a.tau, 0.0)  # SLA is charged on permitted routes only
    terms = {
        "inference_margin": float(np.einsum("k,ikt->", a.rev - a.gpu, s.x)),
        "sla_penalty": -float(a.sla * np.einsum("ik,ikt->", tau, s.x)),
        "energy_sales": float(dt * np.sum(a.sell[None, :] * s.p_sell)),
        "energy_purchases": -float(dt * np.sum(a.buy[None, :] * s.p_buy)),
        "degradation": -float(a.deg * dt * np.sum(s.p_chg + s.p_dis)),
        "training_reward": float(np.einsum("j,ijt->", a.r_tr, s.u)),
    }
    total = math.fsum(terms.values())
    site_em = a.rho * dt * s.p_buy
    series = None
    if detail:
        series = {"emissions_kg": site_em.tolist(), "grid_import_kw": s.p_buy.tolist(),
                  "grid_export_kw": s.p_sell.tolist(), "soc_kwh": s.soc.tolist()}
    return Metrics(total, terms, float(site_em.sum()), series)
