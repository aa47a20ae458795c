"""Joint compute and energy scheduling for data centers that buy, sell and store power.

Typical use::

    from prosumer_milp import GenConfig, generate, run_comparison
    rows = run_comparison(generate(GenConfig(seed=1)))
"""

from .baselines import (COMPUTE_ONLY, ENERGY_ONLY, METHODS, BaselineInfeasible, EvaluatedSolution,
                        minimum_emissions, run_compute_only, run_energy_only, run_joint, run_method,
                        run_variant)
from .bnb import SolveReport, SolverParams, solve_milp
from .builder import (JOINT, NO_BATTERY, NO_CARBON, NO_ROUTING, VARIANTS, BuildOptions,
                      InfeasibleByConstruction, VarIndex, build, solution_from_point)
from .harness import (ComparisonRow, SweepConfig, enumeration_oracle, knapsack_oracle, run_comparison,
                      run_sweep)
from .instance import Instance, load_instance, save_instance, validate_instance
from .lp import LpResult, SimplexLP, solve_lp
from .milp import MilpModel, evaluate
from .mps import export_mps, import_mps
from .scenarios import GenConfig, generate, generate_knapsack_case, generate_uncapped
from .validator import ConstraintReport, Metrics, Solution, check_solution, compute_metrics

__version__ = "0.1.0"

__all__ = [
    "COMPUTE_ONLY",
    "ENERGY_ONLY",
    "METHODS",
    "BaselineInfeasible",
    "EvaluatedSolution",
    "minimum_emissions",
    "run_compute_only",
    "run_energy_only",
    "run_joint",
    "run_method",
    "run_variant",
    "SolveReport",
    "SolverParams",
    "solve_milp",
    "JOINT",
    "NO_BATTERY",
    "NO_CARBON",
    "NO_ROUTING",
    "VARIANTS",
    "BuildOptions",
    "InfeasibleByConstruction",
    "VarIndex",
    "build",
    "solution_from_point",
    "ComparisonRow",
    "SweepConfig",
    "enumeration_oracle",
    "knapsack_oracle",
    "run_comparison",
    "run_sweep",
    "Instance",
    "load_instance",
    "save_instance",
    "validate_instance",
    "LpResult",
    "SimplexLP",
    "solve_lp",
    "MilpModel",
    "evaluate",
    "export_mps",
    "import_mps",
    "GenConfig",
    "generate",
    "generate_knapsack_case",
    "generate_uncapped",
    "ConstraintReport",
    "Metrics",
    "Solution",
    "check_solution",
    "compute_metrics",
]
