"""Problem instance: sites, time grid, workloads, prices, carbon and latency data.

Instances are immutable.  They serialise to a JSON document with the top-level
keys ``time``, ``sites``, ``jobs``, ``classes``, ``economics``, ``latency`` and
``enforce_terminal_soc`` (see ``docs/instance_format.md``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, is_dataclass
from functools import cached_property
from types import SimpleNamespace

import numpy as np


class InstanceParseError(ValueError):
    """Malformed instance document; ``location`` is a field path or line number."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class InstanceValidationError(ValueError):
    def __init__(self, report: "ValidationReport"):
        self.report = report
        lines = "\n".join(f"  {i.path}: {i.message}" for i in report.issues)
        super().__init__(f"instance failed validation:\n{lines}")


@dataclass(frozen=True)
class TimeGrid:
    num_periods: int
    period_hours: float = 1.0


@dataclass(frozen=True)
class BatterySpec:
    charge_eff: float
    discharge_eff: float
    soc_min_kwh: float
    soc_max_kwh: float
    max_charge_kw: float
    max_discharge_kw: float
    soc_init_kwh: float | None = None

    @property
    def initial_soc(self) -> float:
        if self.soc_init_kwh is None:
            return 0.5 * (self.soc_min_kwh + self.soc_max_kwh)
        return self.soc_init_kwh


@dataclass(frozen=True)
class SiteSpec:
    id: str
    grid_capacity_kw: float
    local_gen_kw: tuple[float, ...]
    cooling_overhead: tuple[float, ...]
    carbon_intensity_kg_per_kwh: tuple[float, ...]
    battery: BatterySpec


@dataclass(frozen=True)
class TrainingJobSpec:
    id: str
    power_kw: float
    min_uptime_periods: int
    reward_per_period: float = 0.0
    non_preemptive: bool = True


@dataclass(frozen=True)
class InferenceClassSpec:
    id: str
    revenue_per_unit: float
    gpu_cost_per_unit: float
    power_kw_per_unit: float
    demand_units: tuple[float, ...]


@dataclass(frozen=True)
class Economics:
    price_buy: tuple[float, ...]
    price_sell: tuple[float, ...]
    battery_degradation_cost: float
    sla_penalty_coeff: float
    carbon_budget_kg: float = math.inf


@dataclass(frozen=True)
class LatencyMatrix:
    latency_ms: tuple[tuple[float, ...], ...]  # [site][class]
    latency_cap_ms: float


@dataclass(frozen=True)
class Instance:
    time: TimeGrid
    sites: tuple[SiteSpec, ...]
    jobs: tuple[TrainingJobSpec, ...]
    classes: tuple[InferenceClassSpec, ...]
    economics: Economics
    latency: LatencyMatrix
    enforce_terminal_soc: bool = False

    @property
    def T(self) -> int:
        return self.time.num_periods

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(sites, jobs, classes, periods)."""
        return len(self.sites), len(self.jobs), len(self.classes), self.time.num_periods

    @cached_property
    def arrays(self) -> SimpleNamespace:
        """Read-only numpy views of the data, indexed [site, period] etc."""
        I, J, K, T = self.dims
        a = SimpleNamespace(
            dt=float(self.time.period_hours),
            cap=np.array([s.grid_capacity_kw for s in self.sites], float),
            loc=np.array([s.local_gen_kw for s in self.sites], float).reshape(I, T),
            alpha=np.array([s.cooling_overhead for s in self.sites], float).reshape(I, T),
            rho=np.array([s.carbon_intensity_kg_per_kwh for s in self.sites], float).reshape(I, T),
            eta_c=np.array([s.battery.charge_eff for s in self.sites], float),
            eta_d=np.array([s.battery.discharge_eff for s in self.sites], float),
            soc_min=np.array([s.battery.soc_min_kwh for s in self.sites], float),
            soc_max=np.array([s.battery.soc_max_kwh for s in self.sites], float),
            soc_init=np.array([s.battery.initial_soc for s in self.sites], float),
            pchg_max=np.array([s.battery.max_charge_kw for s in self.sites], float),
            pdis_max=np.array([s.battery.max_discharge_kw for s in self.sites], float),
            p_tr=np.array([j.power_kw for j in self.jobs], float),
            u_min=np.array([j.min_uptime_periods for j in self.jobs], int),
            r_tr=np.array([j.reward_per_period for j in self.jobs], float),
            p_inf=np.array([k.power_kw_per_unit for k in self.classes], float),
            rev=np.array([k.revenue_per_unit for k in self.classes], float),
            gpu=np.array([k.gpu_cost_per_unit for k in self.classes], float),
            demand=np.array([k.demand_units for k in self.classes], float).reshape(K, T),
            buy=np.array(self.economics.price_buy, float),
            sell=np.array(self.economics.price_sell, float),
            deg=float(self.economics.battery_degradation_cost),
            sla=float(self.economics.sla_penalty_coeff),
            e_max=float(self.economics.carbon_budget_kg),
            tau=np.array(self.latency.latency_ms, float).reshape(I, K),
            tau_max=float(self.latency.latency_cap_ms),
        )
        a.feasible_pair = a.tau <= a.tau_max
        for v in vars(a).values():
            if isinstance(v, np.ndarray):
                v.setflags(write=False)
        return a


# Where each model symbol lives.  Every symbol has exactly one home.
SYMBOL_FIELDS = {
    "R_k": "classes[k].revenue_per_unit",
    "C_k^gpu": "classes[k].gpu_cost_per_unit",
    "gamma^sla": "economics.sla_penalty_coeff",
    "tau_{i,k}": "latency.latency_ms[i][k]",
    "lambda^buy_t": "economics.price_buy[t]",
    "lambda^sell_t": "economics.price_sell[t]",
    "C^deg": "economics.battery_degradation_cost",
    "P^tr_j": "jobs[j].power_kw",
    "P^inf_k": "classes[k].power_kw_per_unit",
    "alpha_{i,t}": "sites[i].cooling_overhead[t]",
    "P^loc_{i,t}": "sites[i].local_gen_kw[t]",
    "C_i^grid": "sites[i].grid_capacity_kw",
    "U_j^min": "jobs[j].min_uptime_periods",
    "D_{k,t}": "classes[k].demand_units[t]",
    "tau^max": "latency.latency_cap_ms",
    "eta^chg": "sites[i].battery.charge_eff",
    "eta^dis": "sites[i].battery.discharge_eff",
    "SOC_min": "sites[i].battery.soc_min_kwh",
    "SOC_max": "sites[i].battery.soc_max_kwh",
    "Pbar^chg": "sites[i].battery.max_charge_kw",
    "Pbar^dis": "sites[i].battery.max_discharge_kw",
    "rho^CO2_{i,t}": "sites[i].carbon_intensity_kg_per_kwh[t]",
    "E^max": "economics.carbon_budget_kg",
    "R^tr_j": "jobs[j].reward_per_period",
    "Delta t": "time.period_hours",
}


# -- validation -----------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    path: str
    message: str


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.issues)

    def __len__(self) -> int:
        return len(self.issues)

    def add(self, path: str, message: str) -> None:
        self.issues.append(Issue(path, message))

    def to_dict(self) -> dict:
        return {"issues": [{"path": i.path, "message": i.message} for i in self.issues]}


def _num(x) -> float | None:
    try:
        return float(x)
    except (TypeError, ValueError):
        return None


def validate_instance(inst: Instance) -> ValidationReport:
    """Collect every broken invariant; never raises on bad numbers."""
    rep = ValidationReport()

    def scalar(path, value, lo=None, hi=None, lo_open=False, allow_inf=False):
        v = _num(value)
        if v is None or math.isnan(v) or (math.isinf(v) and not allow_inf):
            rep.add(path, f"not a finite number ({value!r})")
            return
        if lo is not None and (v <= lo if lo_open else v < lo):
            rep.add(path, f"{v} is below the allowed minimum {lo}")
        if hi is not None and v > hi:
            rep.add(path, f"{v} exceeds the allowed maximum {hi}")

    def series(path, values, T, lo=None):
        try:
            vals = list(values)
        except TypeError:
            rep.add(path, "not a series")
            return
        if len(vals) != T:
            rep.add(path, f"series length {len(vals)} != num_periods {T}")
        for t, v in enumerate(vals):
            scalar(f"{path}[{t}]", v, lo=lo)

    T = inst.time.num_periods
    if not isinstance(T, int) or T < 1:
        rep.add("time.num_periods", f"must be an integer >= 1 (got {T!r})")
        T = -1
    scalar("time.period_hours", inst.time.period_hours, lo=0.0, lo_open=True)

    def unique(kind, items):
        seen = set()
        for n, it in enumerate(items):
            if it.id in seen:
                rep.add(f"{kind}[{n}].id", f"duplicate id {it.id!r}")
            seen.add(it.id)

    unique("sites", inst.sites)
    unique("jobs", inst.jobs)
    unique("classes", inst.classes)

    for i, s in enumerate(inst.sites):
        p = f"sites[{i}]"
        scalar(f"{p}.grid_capacity_kw", s.grid_capacity_kw, lo=0.0)
        series(f"{p}.local_gen_kw", s.local_gen_kw, T, lo=0.0)
        series(f"{p}.cooling_overhead", s.cooling_overhead, T, lo=0.0)
        series(f"{p}.carbon_intensity_kg_per_kwh", s.carbon_intensity_kg_per_kwh, T, lo=0.0)
        b = s.battery
        bp = f"{p}.battery"
        scalar(f"{bp}.charge_eff", b.charge_eff, lo=0.0, hi=1.0, lo_open=True)
        scalar(f"{bp}.discharge_eff", b.discharge_eff, lo=0.0, hi=1.0, lo_open=True)
        scalar(f"{bp}.soc_min_kwh", b.soc_min_kwh, lo=0.0)
        scalar(f"{bp}.soc_max_kwh", b.soc_max_kwh, lo=0.0)
        scalar(f"{bp}.max_charge_kw", b.max_charge_kw, lo=0.0)
        scalar(f"{bp}.max_discharge_kw", b.max_discharge_kw, lo=0.0)
        lo, hi, init = _num(b.soc_min_kwh), _num(b.soc_max_kwh), _num(b.initial_soc)
        if None not in (lo, hi, init) and not any(map(math.isnan, (lo, hi, init))):
            if lo > hi:
                rep.add(f"{bp}.soc_min_kwh", f"soc_min {lo} > soc_max {hi}")
            elif not lo <= init <= hi:
                rep.add(f"{bp}.soc_init_kwh", f"initial SOC {init} outside [{lo}, {hi}]")

    for j, job in enumerate(inst.jobs):
        p = f"jobs[{j}]"
        scalar(f"{p}.power_kw", job.power_kw, lo=0.0, lo_open=True)
        scalar(f"{p}.reward_per_period", job.reward_per_period, lo=0.0)
        u = job.min_uptime_periods
        if not isinstance(u, (int, np.integer)) or isinstance(u, bool) or u < 1 or (T > 0 and u > T):
            rep.add(f"{p}.min_uptime_periods", f"must be an integer in [1, {T}] (got {u!r})")

    for k, cls in enumerate(inst.classes):
        p = f"classes[{k}]"
        scalar(f"{p}.revenue_per_unit", cls.revenue_per_unit)
        scalar(f"{p}.gpu_cost_per_unit", cls.gpu_cost_per_unit)
        scalar(f"{p}.power_kw_per_unit", cls.power_kw_per_unit, lo=0.0)
        series(f"{p}.demand_units", cls.demand_units, T, lo=0.0)

    e = inst.economics
    series("economics.price_buy", e.price_buy, T, lo=0.0)
    series("economics.price_sell", e.price_sell, T, lo=0.0)
    scalar("economics.battery_degradation_cost", e.battery_degradation_cost, lo=0.0)
    scalar("economics.sla_penalty_coeff", e.sla_penalty_coeff, lo=0.0)
    scalar("economics.carbon_budget_kg", e.carbon_budget_kg, lo=0.0, allow_inf=True)

    lat = inst.latency
    scalar("latency.latency_cap_ms", lat.latency_cap_ms, lo=0.0, allow_inf=True)
    if len(lat.latency_ms) != len(inst.sites):
        rep.add("latency.latency_ms", f"{len(lat.latency_ms)} rows, expected one per site ({len(inst.sites)})")
    for i, row in enumerate(lat.latency_ms):
        if len(row) != len(inst.classes):
            rep.add(f"latency.latency_ms[{i}]", f"{len(row)} entries, expected one per class ({len(inst.classes)})")
        for k, v in enumerate(row):
            scalar(f"latency.latency_ms[{i}][{k}]", v, lo=0.0, allow_inf=True)

    if not rep.issues:
        # demand with no latency-feasible site makes the demand equality infeasible
        cap = lat.latency_cap_ms
        for k, cls in enumerate(inst.classes):
            if any(lat.latency_ms[i][k] <= cap for i in range(len(inst.sites))):
                continue
            for t, dem in enumerate(cls.demand_units):
                if dem > 0:
                    rep.add(f"classes[{k}].demand_units[{t}]",
                            f"unserviceable demand (class {k}, t={t}): no latency-feasible site")
    return rep


# -- (de)serialisation ------------------------------------------------------------------


def _encode(obj):
    if is_dataclass(obj):
        return {f.name: _encode(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_encode(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return None if obj > 0 else "-inf"
    return obj


def instance_to_dict(inst: Instance) -> dict:
    return _encode(inst)


def save_instance(inst: Instance) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(instance_to_dict(inst), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _req(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        raise InstanceParseError("expected an object", path or "<root>")
    if key not in d:
        raise InstanceParseError(f"missing required field {key!r}", f"{path}.{key}" if path else key)
    return d[key]


def _float(v, path, allow_none_inf=False):
    if v is None and allow_none_inf:
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InstanceParseError(f"expected a number, got {v!r}", path)
    return float(v)


def _series(v, path, allow_none_inf=False):
    if not isinstance(v, list):
        raise InstanceParseError("expected an array", path)
    return tuple(_float(x, f"{path}[{t}]", allow_none_inf) for t, x in enumerate(v))


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise InstanceParseError(f"expected an integer, got {v!r}", path)
    return v


def instance_from_dict(doc: dict, validate: bool = True) -> Instance:
    tg = _req(doc, "time", "")
    time = TimeGrid(_int(_req(tg, "num_periods", "time"), "time.num_periods"),
                    _float(tg.get("period_hours", 1.0), "time.period_hours"))
    sites = []
    for i, s in enumerate(_req(doc, "sites", "")):
        p = f"sites[{i}]"
        b = _req(s, "battery", p)
        bp = f"{p}.battery"
        init = b.get("soc_init_kwh")
        battery = BatterySpec(
            charge_eff=_float(_req(b, "charge_eff", bp), f"{bp}.charge_eff"),
            discharge_eff=_float(_req(b, "discharge_eff", bp), f"{bp}.discharge_eff"),
            soc_min_kwh=_float(_req(b, "soc_min_kwh", bp), f"{bp}.soc_min_kwh"),
            soc_max_kwh=_float(_req(b, "soc_max_kwh", bp), f"{bp}.soc_max_kwh"),
            max_charge_kw=_float(_req(b, "max_charge_kw", bp), f"{bp}.max_charge_kw"),
            max_discharge_kw=_float(_req(b, "max_discharge_kw", bp), f"{bp}.max_discharge_kw"),
            soc_init_kwh=None if init is None else _float(init, f"{bp}.soc_init_kwh"),
        )
        sites.append(SiteSpec(
            id=str(_req(s, "id", p)),
            grid_capacity_kw=_float(_req(s, "grid_capacity_kw", p), f"{p}.grid_capacity_kw"),
            local_gen_kw=_series(_req(s, "local_gen_kw", p), f"{p}.local_gen_kw"),
            cooling_overhead=_series(_req(s, "cooling_overhead", p), f"{p}.cooling_overhead"),
            carbon_intensity_kg_per_kwh=_series(_req(s, "carbon_intensity_kg_per_kwh", p),
                                                f"{p}.carbon_intensity_kg_per_kwh"),
            battery=battery,
        ))
    jobs = []
    for j, d in enumerate(_req(doc, "jobs", "")):
        p = f"jobs[{j}]"
        jobs.append(TrainingJobSpec(
            id=str(_req(d, "id", p)),
            power_kw=_float(_req(d, "power_kw", p), f"{p}.power_kw"),
            min_uptime_periods=_int(_req(d, "min_uptime_periods", p), f"{p}.min_uptime_periods"),
            reward_per_period=_float(d.get("reward_per_period", 0.0), f"{p}.reward_per_period"),
            non_preemptive=bool(d.get("non_preemptive", True)),
        ))
    classes = []
    for k, d in enumerate(_req(doc, "classes", "")):
        p = f"classes[{k}]"
        classes.append(InferenceClassSpec(
            id=str(_req(d, "id", p)),
            revenue_per_unit=_float(_req(d, "revenue_per_unit", p), f"{p}.revenue_per_unit"),
            gpu_cost_per_unit=_float(_req(d, "gpu_cost_per_unit", p), f"{p}.gpu_cost_per_unit"),
            power_kw_per_unit=_float(_req(d, "power_kw_per_unit", p), f"{p}.power_kw_per_unit"),
            demand_units=_series(_req(d, "demand_units", p), f"{p}.demand_units"),
        ))
    e = _req(doc, "economics", "")
    economics = Economics(
        price_buy=_series(_req(e, "price_buy", "economics"), "economics.price_buy"),
        price_sell=_series(_req(e, "price_sell", "economics"), "economics.price_sell"),
        battery_degradation_cost=_float(_req(e, "battery_degradation_cost", "economics"),
                                        "economics.battery_degradation_cost"),
        sla_penalty_coeff=_float(_req(e, "sla_penalty_coeff", "economics"), "economics.sla_penalty_coeff"),
        carbon_budget_kg=_float(e.get("carbon_budget_kg"), "economics.carbon_budget_kg", allow_none_inf=True),
    )
    lat = _req(doc, "latency", "")
    rows = _req(lat, "latency_ms", "latency")
    if not isinstance(rows, list):
        raise InstanceParseError("expected an array of rows", "latency.latency_ms")
    latency = LatencyMatrix(
        latency_ms=tuple(_series(r, f"latency.latency_ms[{i}]", True) for i, r in enumerate(rows)),
        latency_cap_ms=_float(_req(lat, "latency_cap_ms", "latency"), "latency.latency_cap_ms",
                              allow_none_inf=True),
    )
    inst = Instance(time, tuple(sites), tuple(jobs), tuple(classes), economics, latency,
                    bool(doc.get("enforce_terminal_soc", False)))
    if validate:
        rep = validate_instance(inst)
        if rep:
            raise InstanceValidationError(rep)
    return inst


def load_instance(document: str, validate: bool = True) -> Instance:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from exc
    return instance_from_dict(doc, validate=validate)
