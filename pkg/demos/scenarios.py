"""Joint objective per scenario for a few seeds.

Local generation should never hurt: with the same seed, ``local_gen_rich``
scales solar output up and leaves everything else alone.
"""

import math

from prosumer_milp import GenConfig, SolverParams, generate, run_joint
from prosumer_milp.scenarios import SCENARIOS

params = SolverParams(rel_gap=0.01, time_limit_s=60)
print("seed " + "".join(f"{s:>28}" for s in SCENARIOS))
for seed in (1, 2, 3):
    cells = []
    for sc in SCENARIOS:
        ev = run_joint(generate(GenConfig(seed=seed, scenario=sc)), params)
        obj = ev.metrics.objective_total if ev.metrics else math.nan
        cells.append(f"{obj:.1f} ({ev.report.status})")
    print(f"{seed:>4} " + "".join(f"{c:>28}" for c in cells))
