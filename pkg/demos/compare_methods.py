"""Joint schedule against the five baselines on one generated instance.

    python3 demos/compare_methods.py [seed]
"""

import sys

from prosumer_milp import GenConfig, SolverParams, generate, run_comparison


def main(seed: int = 1) -> None:
    inst = generate(GenConfig(seed=seed))
    I, J, K, T = inst.dims
    print(f"seed {seed}: {I} sites, {J} jobs, {K} classes, {T} periods, "
          f"carbon budget {inst.economics.carbon_budget_kg:.0f} kg")
    rows = run_comparison(inst, SolverParams(rel_gap=0.01, time_limit_s=120))
    print(f"{'method':<14}{'objective':>12}{'emissions kg':>14}{'gap':>10}{'time s':>8}")
    for r in rows:
        print(f"{r.method:<14}{r.objective:>12.1f}{r.emissions_kg:>14.1f}{r.gap:>10.1e}{r.wall_time_s:>8.2f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
