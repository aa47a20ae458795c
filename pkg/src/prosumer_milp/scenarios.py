"""Seeded synthetic instances: the default shape, four named scenarios and the
single-site knapsack special case.

All numeric ranges come from ``generator_params.json`` next to this module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources

import numpy as np

from .instance import (BatterySpec, Economics, InferenceClassSpec, Instance, LatencyMatrix,
                       SiteSpec, TimeGrid, TrainingJobSpec)

DEFAULT = "default"
TRAINING_DOMINANT = "training_dominant"
INFERENCE_DOMINANT = "inference_dominant"
LOCAL_GEN_RICH = "local_gen_rich"
PEAK_DEMAND = "peak_demand"
SCENARIOS = (DEFAULT, TRAINING_DOMINANT, INFERENCE_DOMINANT, LOCAL_GEN_RICH, PEAK_DEMAND)


@lru_cache(maxsize=1)
def parameters() -> dict:
    text = resources.files(__package__).joinpath("generator_params.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 1
    num_sites: int = 3
    num_periods: int = 24
    num_jobs: int = 6
    num_classes: int = 3
    scenario: str = DEFAULT

    def __post_init__(self):
        for name in ("num_sites", "num_periods", "num_jobs", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")


def _diurnal(hours, peak_hour):
    return np.cos(2.0 * np.pi * (hours - peak_hour) / 24.0)


def _base_data(cfg: GenConfig):
    """Draw every random quantity for (seed, dimensions); scenario-independent."""
    P = parameters()
    rng = np.random.default_rng(cfg.seed)
    I, T, J, K = cfg.num_sites, cfg.num_periods, cfg.num_jobs, cfg.num_classes
    hours = np.arange(T) % 24

    pr = P["price"]
    mean_price = rng.uniform(*pr["mean_range"])
    amp = (pr["peak_to_trough"] - 1.0) / (pr["peak_to_trough"] + 1.0)
    shape = _diurnal(hours, pr["peak_hour"])
    noise = 1.0 + pr["noise"] * rng.uniform(-1, 1, T)
    price_mean = np.full(T, mean_price)
    price_dev = mean_price * amp * shape

    ca = P["carbon"]
    ranks = rng.permutation(I)
    base_ci = ca["low"] + (ca["high"] - ca["low"]) * (ranks / max(I - 1, 1))
    base_ci = base_ci + ca["site_noise"] * rng.uniform(-1, 1, I)
    green = int(np.argmin(base_ci))

    de = P["demand"]
    inf = P["inference"]
    mean_units = rng.uniform(*de["mean_units_range"], K)
    phase = rng.uniform(0, 24, K)
    demand = mean_units[:, None] * (1.0 + de["amplitude"] * np.sin(2 * np.pi * (hours[None, :] - phase[:, None]) / 24))
    demand *= 1.0 + de["noise"] * rng.uniform(-1, 1, (K, T))
    p_inf = rng.uniform(*inf["power_kw_per_unit_range"], K)
    rev = rng.uniform(*inf["revenue_range"], K)
    gpu = rng.uniform(*inf["gpu_cost_range"], K)

    la = P["latency"]
    dirty_first = np.argsort(-base_ci)
    tau = rng.uniform(*la["far_range_ms"], (I, K))
    for k in range(K):
        near = int(dirty_first[k % I])
        tau[near, k] = rng.uniform(*la["near_range_ms"])
        others = [i for i in range(I) if i != near]
        n_extra = min(len(others), int(rng.integers(la["extra_feasible"][0], la["extra_feasible"][1] + 1)))
        for i in rng.choice(others, size=n_extra, replace=False) if n_extra else []:
            tau[int(i), k] = rng.uniform(*la["mid_range_ms"])

    tr = P["training"]
    p_tr = rng.uniform(*tr["power_kw_range"], J)
    u_min = np.minimum(rng.integers(tr["min_uptime_range"][0], tr["min_uptime_range"][1] + 1, J), T)
    reward_factor = rng.uniform(*tr["reward_factor_range"], J)

    co = P["cooling"]
    bump = co["midday_bump"] * np.exp(-(((hours - co["bump_hour"]) / co["bump_width"]) ** 2))
    # dirtier sites run hotter, so moving load to clean sites also saves energy
    lo, hi = co["base_range"]
    base_alpha = lo + (hi - lo) * ranks / max(I - 1, 1) + co["site_noise"] * rng.uniform(-1, 1, I)
    alpha = np.clip(base_alpha[:, None] + bump[None, :], *co["clip"])

    ci = base_ci[:, None] * (1.0 + ca["diurnal_amplitude"] * _diurnal(hours, 19)[None, :])
    solar_shape = np.clip(np.sin(np.pi * (hours - P["solar"]["sunrise"])
                                 / (P["solar"]["sunset"] - P["solar"]["sunrise"])), 0, None)
    ci[green] *= 1.0 - 0.3 * solar_shape
    ci = np.clip(ci, 0.0, None)

    return dict(rng=rng, hours=hours, price_mean=price_mean, price_dev=price_dev, price_noise=noise,
                ci=ci, green=green, demand=demand, p_inf=p_inf, rev=rev, gpu=gpu, tau=tau,
                p_tr=p_tr, u_min=u_min, reward_factor=reward_factor, alpha=alpha,
                solar_shape=solar_shape, mean_price=mean_price)


def _assemble(cfg: GenConfig, budget: float) -> Instance:
    P = parameters()
    b = _base_data(cfg)
    I, T, J, K = cfg.num_sites, cfg.num_periods, cfg.num_jobs, cfg.num_classes
    hours = b["hours"]
    sc = P["scenarios"].get(cfg.scenario, {})

    # infrastructure is sized from the unscaled workload so scenarios stress it
    mean_it = (float((b["demand"] * b["p_inf"][:, None]).sum(axis=0).mean()) + 0.5 * float(b["p_tr"].sum())) / I
    peak_it = float((b["demand"] * b["p_inf"][:, None]).sum(axis=0).max()) + float(b["p_tr"].sum())
    loc_peak = P["solar"]["peak_fraction_of_mean_it"] * mean_it
    g = P["grid"]
    cap = max(g["capacity_factor"] * (1.0 + P["cooling"]["clip"][1]) * peak_it / I,
              g["min_local_gen_multiple"] * loc_peak)
    ba = P["battery"]
    soc_max = ba["hours_of_mean_it"] * mean_it
    battery = BatterySpec(charge_eff=ba["efficiency"], discharge_eff=ba["efficiency"],
                          soc_min_kwh=ba["soc_min_fraction"] * soc_max, soc_max_kwh=soc_max,
                          max_charge_kw=ba["c_rate"] * soc_max, max_discharge_kw=ba["c_rate"] * soc_max)

    demand = b["demand"].copy()
    p_tr = b["p_tr"].copy()
    price_dev = b["price_dev"].copy()
    loc = np.zeros((I, T))
    loc[b["green"]] = loc_peak * b["solar_shape"]
    demand *= sc.get("demand_scale", 1.0)
    job_scale = sc.get("job_scale", 1.0)
    p_tr *= job_scale
    loc *= sc.get("local_gen_scale", 1.0)
    if "peak_scale" in sc:
        lo, hi = sc["peak_hours"]
        peak = (hours >= lo) & (hours <= hi)
        demand[:, peak] *= sc["peak_scale"]
        price_dev[peak] *= sc["peak_scale"]
    price_buy = np.clip((b["price_mean"] + price_dev) * b["price_noise"], 0.0, None)
    price_sell = P["price"]["sell_ratio"] * price_buy
    # reward per period relative to the job's energy cost at the mean price
    reward = b["reward_factor"] * b["p_tr"] * (1.0 + float(b["alpha"].mean())) * b["mean_price"] * job_scale

    sites = tuple(
        SiteSpec(id=f"site{i}", grid_capacity_kw=_r(cap), local_gen_kw=_rs(loc[i]),
                 cooling_overhead=_rs(b["alpha"][i]), carbon_intensity_kg_per_kwh=_rs(b["ci"][i]),
                 battery=battery)
        for i in range(I))
    jobs = tuple(
        TrainingJobSpec(id=f"job{j}", power_kw=_r(p_tr[j]), min_uptime_periods=int(b["u_min"][j]),
                        reward_per_period=_r(reward[j]))
        for j in range(J))
    classes = tuple(
        InferenceClassSpec(id=f"class{k}", revenue_per_unit=_r(b["rev"][k]),
                           gpu_cost_per_unit=_r(b["gpu"][k]), power_kw_per_unit=_r(b["p_inf"][k]),
                           demand_units=_rs(demand[k]))
        for k in range(K))
    economics = Economics(price_buy=_rs(price_buy), price_sell=_rs(price_sell),
                          battery_degradation_cost=ba["degradation_cost"],
                          sla_penalty_coeff=P["sla_penalty_coeff"], carbon_budget_kg=budget)
    latency = LatencyMatrix(latency_ms=tuple(_rs(row) for row in b["tau"]),
                            latency_cap_ms=P["latency"]["cap_ms"])
    return Instance(TimeGrid(T, 1.0), sites, jobs, classes, economics, latency)


def _r(x) -> float:
    # rounded so that saved documents are short and exactly reproducible
    return round(float(x), 6)


def _rs(xs) -> tuple[float, ...]:
    return tuple(_r(x) for x in xs)


def calibrate_budget(inst: Instance, params=None) -> float:
    """Carbon budget between the compute-only emissions with and without
    inference routing, so it binds a routing-restricted schedule but leaves
    room for a routing-aware one; never below the least-emission way of
    serving the demand at home sites (plus margin)."""
    from .baselines import minimum_emissions, run_compute_only

    P = parameters()["carbon_budget"]
    uncapped = replace(inst, economics=replace(inst.economics, carbon_budget_kg=math.inf))
    routed = run_compute_only(uncapped, params).metrics.emissions_kg
    pinned = run_compute_only(uncapped, params, routing=False).metrics.emissions_kg
    floor = minimum_emissions(uncapped, routing=False)
    w = P["home_weight"]
    return _r(max((1.0 - w) * routed + w * pinned, P["min_feasible_margin"] * floor))


def generate(config: GenConfig, params=None) -> Instance:
    """Two-pass generation: draw data, then calibrate the carbon budget on the
    default scenario of the same seed and dimensions."""
    base_cfg = replace(config, scenario=DEFAULT)
    budget = calibrate_budget(_assemble(base_cfg, math.inf), params)
    return _assemble(config, budget)


def generate_uncapped(config: GenConfig) -> Instance:
    """Single-pass variant with no carbon budget (cheap; used by tests and sweeps)."""
    return _assemble(config, math.inf)


@dataclass(frozen=True)
class KnapsackCase:
    instance: Instance
    values: tuple[float, ...]
    weights: tuple[int, ...]
    capacity: int


def generate_knapsack_case(seed: int, n_items: int) -> KnapsackCase:
    """One site, one period, jobs only: selecting jobs is a 0-1 knapsack.

    Powers, cooling and capacity are chosen so that the weights
    ``(1 + alpha) * P_j`` and the capacity are integers.
    """
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    rng = np.random.default_rng(seed)
    alpha = 0.25
    price = 1.0
    p_tr = rng.integers(4, 41, n_items) * 4  # multiples of 4 so (1 + alpha) * P is integral
    weights = (p_tr + p_tr // 4).astype(int)
    capacity = int(rng.integers(int(weights.sum() * 0.3), int(weights.sum() * 0.6) + 1))
    capacity = max(capacity, int(weights.max()))  # every item fits on its own
    # net value reward - price * weight; a few items are not worth their energy
    values = np.maximum(rng.integers(-20, 61, n_items), -weights)
    rewards = values + weights
    battery = BatterySpec(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    site = SiteSpec("site0", float(capacity), (0.0,), (alpha,), (0.0,), battery)
    jobs = tuple(TrainingJobSpec(f"job{j}", float(p_tr[j]), 1, float(price * rewards[j]))
                 for j in range(n_items))
    economics = Economics((price,), (0.0,), 0.0, 0.0, math.inf)
    inst = Instance(TimeGrid(1, 1.0), (site,), jobs, (), economics, LatencyMatrix(((),), 0.0))
    return KnapsackCase(inst, tuple(float(v) for v in values), tuple(int(w) for w in weights), capacity)
