"""One site and one period turn job selection into a 0-1 knapsack.

The branch-and-bound objective is compared with the dynamic program on the
same weights and values.
"""

from prosumer_milp import SolverParams, build, generate_knapsack_case, knapsack_oracle, solve_milp

for seed, n in [(0, 8), (1, 12), (2, 15)]:
    case = generate_knapsack_case(seed, n)
    model, _ = build(case.instance)
    rep = solve_milp(model, SolverParams(rel_gap=0.0))
    dp = knapsack_oracle(case.values, case.weights, case.capacity)
    print(f"n={n:2d} capacity={case.capacity:4d}  milp={rep.objective:8.1f}  dp={dp:8.1f}  "
          f"nodes={rep.nodes}  {rep.wall_time_s:.2f} s")
