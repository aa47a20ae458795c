"""Command-line entry point.

Exit codes: 0 success, 1 infeasible (model or checked solution), 2 usage or
input error, 3 internal check failure (validator disagrees with the solver).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .baselines import run_method
from .bnb import STATUS_INFEASIBLE, SolverParams
from .builder import JOINT, VARIANTS, BuildOptions, InfeasibleByConstruction, build
from .harness import (AXES, DEFAULT_GRID, COMPARISON_FIELDS, CertificationError, OracleLimitExceeded,
                      SweepConfig, certify, enumeration_oracle, run_comparison, run_sweep, write_csv)
from .instance import InstanceParseError, InstanceValidationError, load_instance, save_instance
from .mps import export_mps
from .scenarios import SCENARIOS, GenConfig, generate, generate_uncapped
from .validator import check_solution, compute_metrics, load_solution, save_solution

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InfeasibleInstance(Exception):
    """Well-formed instance whose only problem is demand no site may serve."""


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_instance(path: str):
    try:
        return load_instance(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read instance: {exc}") from None
    except InstanceValidationError as exc:
        if all("unserviceable demand" in i.message for i in exc.report.issues):
            raise InfeasibleInstance(f"{path}: {exc}") from None
        raise UsageError(f"invalid instance {path}: {exc}") from None
    except InstanceParseError as exc:
        raise UsageError(f"invalid instance {path}: {exc}") from None


def _params(args) -> SolverParams:
    try:
        return SolverParams(time_limit_s=args.time_limit, rel_gap=args.gap, seed=args.seed,
                            threads=args.threads, log_interval=100 if args.verbose else None)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _gen_config(args) -> GenConfig:
    try:
        return GenConfig(seed=args.seed, num_sites=args.sites, num_periods=args.periods,
                         num_jobs=args.jobs, num_classes=args.classes, scenario=args.scenario)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- subcommands ------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = _gen_config(args)
    inst = generate_uncapped(cfg) if args.uncapped else generate(cfg)
    _emit(save_instance(inst), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _read_instance(args.instance)
    try:
        ev = run_method(inst, args.variant, _params(args))
    except InfeasibleByConstruction as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    rep = ev.report
    doc = {"method": ev.method, "status": rep.status, "objective": rep.objective, "bound": rep.bound,
           "gap": rep.gap, "nodes": rep.nodes, "wall_time_s": rep.wall_time_s,
           "metrics": ev.metrics.to_dict() if ev.metrics else None,
           "check": ev.check.to_dict() if ev.check else None, "joint_feasible": ev.joint_feasible}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(_dump(doc))
        if ev.solution is not None:
            (out / "solution.json").write_text(save_solution(ev.solution))
    else:
        sys.stdout.write(_dump(doc))
    if ev.solution is None:
        return EXIT_INFEASIBLE if rep.status == STATUS_INFEASIBLE else EXIT_OK
    try:
        certify(ev)
    except CertificationError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    # a variant may legitimately break the carbon budget; anything else is a solver fault
    relevant = [f for f in ev.check.violations if not (ev.method != JOINT and f.family == "eq16")]
    if relevant:
        print(f"check failed: validator flags {sorted({f.family for f in relevant})}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_compare(args) -> int:
    inst = _read_instance(args.instance) if args.instance else generate(_gen_config(args))
    fields = [f for f in COMPARISON_FIELDS if not (args.no_timing and f == "wall_time_s")]
    code = EXIT_OK
    try:
        rows = run_comparison(inst, _params(args))
    except CertificationError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        rows, code = exc.rows, EXIT_CHECK
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fields, fh)
    else:
        write_csv(rows, fields, sys.stdout)
    return code


def cmd_sweep(args) -> int:
    values = args.values or DEFAULT_GRID[args.axis]
    cfg = SweepConfig(args.axis, values, _gen_config(args), _params(args), args.repetitions)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            run_sweep(cfg, fh)
    else:
        run_sweep(cfg, sys.stdout)
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = _read_instance(args.instance)
    try:
        sol = load_solution(Path(args.solution).read_text())
        rep = check_solution(inst, sol, tol=args.tol)
    except (OSError, ValueError, KeyError) as exc:  # includes ShapeError and JSON errors
        raise UsageError(f"cannot check solution: {exc}") from None
    doc = rep.to_dict()
    doc["metrics"] = compute_metrics(inst, sol).to_dict()
    _emit(_dump(doc), args.out)
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_export_mps(args) -> int:
    inst = _read_instance(args.instance)
    try:
        model, _ = build(inst, BuildOptions(args.variant))
    except InfeasibleByConstruction as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _emit(export_mps(model), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = _read_instance(args.instance)
    try:
        res = enumeration_oracle(inst, limit=args.limit, variant=args.variant)
    except OracleLimitExceeded as exc:
        raise UsageError(str(exc)) from None
    doc = {"status": res.status, "objective": res.objective if math.isfinite(res.objective) else None,
           "patterns": res.patterns, "lps_solved": res.lps_solved,
           "solution": res.solution.to_dict() if res.solution is not None else None}
    _emit(_dump(doc), args.out)
    return EXIT_OK if res.status == "optimal" else EXIT_INFEASIBLE


# -- parser ----------------------------------------------------------------------------

def _add_solver_flags(p):
    p.add_argument("--time-limit", type=float, default=120.0, help="seconds per MILP (default 120)")
    p.add_argument("--gap", type=float, default=0.01, help="relative MIP gap (default 0.01)")
    p.add_argument("--threads", type=int, default=1, help="parallel node solves (default 1)")


def _add_gen_flags(p):
    p.add_argument("--sites", type=int, default=3)
    p.add_argument("--periods", type=int, default=24)
    p.add_argument("--jobs", type=int, default=6)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--scenario", choices=SCENARIOS, default="default")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prosumer-milp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=1, help="generator or solver seed (default 1)")
        p.add_argument("--out", help="output path (stdout when omitted)")
        return p

    p = command("generate", cmd_generate, "write a seeded synthetic instance")
    _add_gen_flags(p)
    p.add_argument("--uncapped", action="store_true", help="skip carbon-budget calibration")

    p = command("solve", cmd_solve, "solve an instance; --out names a directory")
    p.add_argument("instance")
    p.add_argument("--variant", choices=VARIANTS, default=JOINT)
    _add_solver_flags(p)

    p = command("compare", cmd_compare, "joint model versus the five baselines (CSV)")
    p.add_argument("instance", nargs="?", help="instance file; generated from --seed when omitted")
    _add_gen_flags(p)
    _add_solver_flags(p)
    p.add_argument("--no-timing", action="store_true", help="omit the wall-time column")

    p = command("sweep", cmd_sweep, "scaling sweep over one dimension (CSV)")
    p.add_argument("--axis", choices=sorted(AXES), default="periods")
    p.add_argument("--values", type=int, nargs="+")
    p.add_argument("--repetitions", type=int, default=1)
    _add_gen_flags(p)
    _add_solver_flags(p)

    p = command("validate", cmd_validate, "check a solution against an instance")
    p.add_argument("instance")
    p.add_argument("solution")
    p.add_argument("--tol", type=float, default=1e-6)

    p = command("export-mps", cmd_export_mps, "write the model as free MPS")
    p.add_argument("instance")
    p.add_argument("--variant", choices=VARIANTS, default=JOINT)

    p = command("oracle", cmd_oracle, "exhaustive optimum of a tiny instance")
    p.add_argument("instance")
    p.add_argument("--variant", choices=VARIANTS, default=JOINT)
    p.add_argument("--limit", type=int, default=2 ** 20, help="maximum number of patterns")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleInstance as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CertificationError, AssertionError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
