"""Branch-and-bound over the simplex relaxation.

Node selection is best-bound, except that the search plunges depth-first from
the root until the first incumbent exists.  Children are re-optimised from the
parent's basis with the dual simplex.  Branching picks the most fractional
binary (lowest index on ties).
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lp import CUTOFF, INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, Basis, SimplexLP
from .milp import MAXIMIZE, MilpModel, evaluate

log = logging.getLogger(__name__)

INT_TOL = 1e-6
RINS_NODES = 200
RINS_TIME_FRACTION = 0.25
RINS_EVERY = 100
DIVE_EVERY = 25

STATUS_OPTIMAL = "optimal"
STATUS_GAP_LIMIT = "gap_limit"
STATUS_TIME_LIMIT = "time_limit"
STATUS_NODE_LIMIT = "node_limit"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"


@dataclass
class SolverParams:
    time_limit_s: float = 120.0
    rel_gap: float = 0.01
    node_limit: int | None = None
    seed: int = 0
    threads: int = 1
    log_interval: int | None = None  # nodes between progress lines; None disables

    def __post_init__(self):
        if not self.time_limit_s > 0:
            raise ValueError("time_limit_s must be positive")
        if not 0 <= self.rel_gap < 1:
            raise ValueError("rel_gap must be in [0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class SolveReport:
    """Outcome of :func:`solve_milp`.

    ``objective_lb`` and ``objective_ub`` bracket the optimum.  For a
    maximisation model the incumbent value is ``objective_lb`` and the best
    bound is ``objective_ub``; for minimisation the roles swap.
    """

    status: str
    incumbent: np.ndarray | None
    objective_lb: float
    objective_ub: float
    gap: float
    nodes: int
    wall_time_s: float
    sense: str = MAXIMIZE
    lp_iterations: int = 0

    @property
    def objective(self) -> float:
        """Incumbent objective value (NaN when there is none)."""
        if self.incumbent is None:
            return math.nan
        return self.objective_lb if self.sense == MAXIMIZE else self.objective_ub

    @property
    def bound(self) -> float:
        return self.objective_ub if self.sense == MAXIMIZE else self.objective_lb


def relative_gap(incumbent: float, bound: float) -> float:
    """(bound - incumbent) / max(|incumbent|, 1e-9) in a maximisation frame."""
    if not math.isfinite(incumbent) or not math.isfinite(bound):
        return math.inf
    return max(bound - incumbent, 0.0) / max(abs(incumbent), 1e-9)


def _is_integral(x, int_idx) -> bool:
    v = x[int_idx]
    return bool(np.all(np.abs(v - np.round(v)) <= INT_TOL))


def _snap(x, int_idx):
    y = x.copy()
    y[int_idx] = np.round(y[int_idx])
    return y


def round_and_repair(lp_point, model: MilpModel, lp: SimplexLP | None = None,
                     lb=None, ub=None, basis: Basis | None = None, deadline: float | None = None):
    """Round the integer variables of an LP point and re-solve the continuous part.

    Tries nearest rounding, then rounding down.  Returns an integral point that
    passes :func:`evaluate` without violations, or ``None``.
    """
    lp = lp or SimplexLP.from_model(model)
    int_idx = model.integer_indices()
    x = np.asarray(lp_point, dtype=float)
    lb = lp.lb if lb is None else lb
    ub = lp.ub if ub is None else ub
    if _is_integral(x, int_idx):
        if not evaluate(model, _snap(x, int_idx))["violations"]:
            return x.copy()
    for rounding in (np.round, np.floor):
        vals = np.clip(rounding(x[int_idx] + (0 if rounding is np.round else INT_TOL)),
                       lb[int_idx], ub[int_idx])
        flb, fub = lb.copy(), ub.copy()
        flb[int_idx] = vals
        fub[int_idx] = vals
        res = lp.solve(flb, fub, basis=basis, deadline=deadline)
        if res.status != OPTIMAL:
            continue
        cand = _snap(res.primal, int_idx)
        if not evaluate(model, cand)["violations"]:
            return cand
    return None


def dive(x, model: MilpModel, lp: SimplexLP, lb, ub, basis: Basis | None = None,
         cutoff: float | None = None, deadline: float | None = None, max_steps: int | None = None,
         direction: str = "up"):
    """Fractional diving from an LP point.

    Each step fixes every integer variable that is already integral, rounds
    the one closest to its ceiling up (``direction="up"``) or the one closest
    to its floor down (``"down"``) and re-solves from the previous basis.  An
    infeasible rounding is retried once in the other direction.  Returns
    ``(point or None, lp_iterations)``.
    """
    int_idx = model.integer_indices()
    lb, ub = np.array(lb, dtype=float), np.array(ub, dtype=float)
    iters = 0
    steps = max_steps if max_steps is not None else len(int_idx) + 1
    for _ in range(steps):
        v = x[int_idx]
        r = np.round(v)
        frac = np.abs(v - r)
        done = frac <= INT_TOL
        lb[int_idx[done]] = r[done]
        ub[int_idx[done]] = r[done]
        if done.all():
            cand = _snap(x, int_idx)
            return (None if evaluate(model, cand)["violations"] else cand), iters
        up = np.ceil(v - INT_TOL)
        if direction == "up":
            k = int(np.argmin(np.where(done, np.inf, up - v)))
            order = (up[k], up[k] - 1.0)
        else:
            k = int(np.argmin(np.where(done, np.inf, v - (up - 1.0))))
            order = (up[k] - 1.0, up[k])
        j = int(int_idx[k])
        res = None
        for val in order:
            tlb, tub = lb.copy(), ub.copy()
            tlb[j] = tub[j] = val
            res = lp.solve(tlb, tub, basis=basis, cutoff=cutoff, deadline=deadline)
            iters += res.iterations
            if res.status == OPTIMAL:
                lb, ub = tlb, tub
                break
        if res.status != OPTIMAL:
            return None, iters
        x, basis = res.primal, res.basis
    return None, iters


@dataclass(order=True)
class _Node:
    key: float  # -bound in maximisation frame, so heapq pops the best bound
    neg_depth: int
    seq: int
    depth: int = field(compare=False)
    bound: float = field(compare=False)
    lb: np.ndarray = field(compare=False, repr=False)
    ub: np.ndarray = field(compare=False, repr=False)
    basis: Basis | None = field(compare=False, repr=False)


class _Search:
    def __init__(self, model: MilpModel, params: SolverParams, initial=None, lp=None,
                 lb=None, ub=None, heuristics=2):
        self.model = model
        self.params = params
        self.lp = lp or SimplexLP.from_model(model)
        self.lb0 = self.lp.lb if lb is None else lb
        self.ub0 = self.lp.ub if ub is None else ub
        self.heuristics = heuristics
        self.int_idx = model.integer_indices()
        self.sign = 1.0 if model.sense == MAXIMIZE else -1.0
        self.start = time.perf_counter()
        self.deadline = self.start + params.time_limit_s
        self.best_x = None
        self.best = -math.inf  # incumbent value in maximisation frame
        self.global_ub = math.inf
        self.nodes = 0
        self.lp_iters = 0
        self.heap: list[_Node] = []
        self.seq = itertools.count()
        if initial is not None:
            self._offer(np.asarray(initial, dtype=float))

    # -- incumbent handling ---------------------------------------------------
    def _offer(self, x) -> bool:
        cand = _snap(x, self.int_idx)
        ev = evaluate(self.model, cand)
        if ev["violations"]:
            return False
        val = self.sign * ev["objective"]
        if val > self.best:
            self.best, self.best_x = val, cand
            return True
        return False

    def _solve_node(self, lb, ub, basis):
        cutoff = None
        if self.best_x is not None:
            cutoff = self.sign * (self.best + 1e-9 * max(1.0, abs(self.best)))
        res = self.lp.solve(lb, ub, basis=basis, cutoff=cutoff, deadline=self.deadline)
        self.lp_iters += res.iterations
        return res

    def _branch_var(self, x):
        v = x[self.int_idx]
        frac = np.abs(v - np.round(v))
        frac[frac <= INT_TOL] = -1.0
        k = int(np.argmax(frac))  # first maximum -> lowest index on ties
        if frac[k] < 0:
            return None
        return int(self.int_idx[k])

    def _children(self, node_lb, node_ub, x, j, bound, basis, depth):
        down_ub = node_ub.copy()
        down_ub[j] = math.floor(x[j])
        up_lb = node_lb.copy()
        up_lb[j] = math.ceil(x[j])
        down = _Node(-bound, -(depth + 1), next(self.seq), depth + 1, bound, node_lb, down_ub, basis)
        up = _Node(-bound, -(depth + 1), next(self.seq), depth + 1, bound, up_lb, node_ub, basis)
        return down, up

    def _gap(self):
        return relative_gap(self.best, self.global_ub)

    def _log(self, force=False):
        li = self.params.log_interval
        if li and (force or self.nodes % li == 0):
            lb, ub = self._bracket()
            log.info("node=%d lb=%.6g ub=%.6g gap=%.6g t=%.3f", self.nodes, lb, ub,
                     self._gap(), time.perf_counter() - self.start)

    def _bracket(self):
        inc = self.best if self.best_x is not None else -math.inf
        bnd = self.global_ub
        if self.sign > 0:
            return inc, bnd
        return -bnd, -inc

    def _refresh_bound(self, extra=()):
        bounds = [n.bound for n in self.heap] + list(extra)
        ub = max(bounds) if bounds else (self.best if self.best_x is not None else -math.inf)
        if self.best_x is not None:
            ub = max(ub, self.best)
        self.global_ub = min(self.global_ub, ub)

    # -- main loop ----------------------------------------------------------------
    def run(self) -> SolveReport:
        p = self.params
        root = self._solve_node(self.lb0, self.ub0, None)
        self.nodes = 1
        if root.status == INFEASIBLE:
            return self._report(STATUS_INFEASIBLE)
        if root.status == UNBOUNDED:
            return self._report(STATUS_UNBOUNDED)
        if root.status == ITERATION_LIMIT:
            # root relaxation unfinished: no bound is known yet
            return self._report(STATUS_TIME_LIMIT, refresh=False)
        root_bound = self.sign * root.objective
        if root.status == CUTOFF:
            self.global_ub = min(self.global_ub, max(root_bound, self.best))
            return self._report(STATUS_OPTIMAL)
        self.global_ub = root_bound
        self._root_heuristics(root)
        plunge = self._process(root, self.lb0, self.ub0, 0)
        while True:
            if plunge is None:
                self._refresh_bound()
                if not self.heap:
                    return self._report(STATUS_OPTIMAL if self.best_x is not None else STATUS_INFEASIBLE)
                if self.best_x is not None and self._gap() <= p.rel_gap:
                    return self._report(STATUS_GAP_LIMIT if self._gap() > 0 else STATUS_OPTIMAL)
            if time.perf_counter() > self.deadline:
                return self._report(STATUS_TIME_LIMIT, plunge)
            if p.node_limit is not None and self.nodes >= p.node_limit:
                return self._report(STATUS_NODE_LIMIT, plunge)
            if plunge is not None:
                batch = [plunge]
            elif self.best_x is None:
                batch = [self._pop_deepest()]
            else:
                batch = [heapq.heappop(self.heap) for _ in range(min(p.threads, len(self.heap)))]
            batch = [n for n in batch if not self._prunable(n.bound)]
            plunge = None
            if not batch:
                continue
            if len(batch) == 1:
                results = [self._solve_node(batch[0].lb, batch[0].ub, batch[0].basis)]
            else:
                with ThreadPoolExecutor(max_workers=p.threads) as pool:
                    results = list(pool.map(lambda n: self._solve_node(n.lb, n.ub, n.basis), batch))
            for node, res in zip(batch, results):
                self.nodes += 1
                if res.status == ITERATION_LIMIT:
                    # ran out of time inside the LP: the parent bound still holds
                    heapq.heappush(self.heap, node)
                    continue
                if res.status in (INFEASIBLE, CUTOFF):
                    continue
                if res.status == UNBOUNDED:
                    return self._report(STATUS_UNBOUNDED)
                child = self._process(res, node.lb, node.ub, node.depth)
                self._periodic_heuristics(res, node.lb, node.ub)
                if child is not None:
                    plunge = child
                self._log()

    def _cutoff(self):
        if self.best_x is None:
            return None
        return self.sign * (self.best + 1e-9 * max(1.0, abs(self.best)))

    def _root_heuristics(self, root):
        heur = round_and_repair(root.primal, self.model, self.lp, self.lb0, self.ub0,
                                basis=root.basis, deadline=self.deadline)
        if heur is not None:
            self._offer(heur)
        if not self.heuristics:
            return
        self._dive(root.primal, self.lb0, self.ub0, root.basis)
        if self.heuristics > 1:
            self._rins(root.primal)

    def _dive(self, x, lb, ub, basis):
        # rounding up finds good points fast; rounding down is the fallback
        # that reaches "switch things off" solutions when up-dives dead-end
        for direction in ("up", "down"):
            found, it = dive(x, self.model, self.lp, lb, ub, basis, cutoff=self._cutoff(),
                             deadline=self.deadline, direction=direction)
            self.lp_iters += it
            if found is not None:
                self._offer(found)
                return
            if self.best_x is not None:
                return

    def _periodic_heuristics(self, res, lb, ub):
        if not self.heuristics or self._gap() <= self.params.rel_gap:
            return
        if self.nodes % DIVE_EVERY == 0:
            self._dive(res.primal, lb, ub, res.basis)
        if self.heuristics > 1 and self.nodes % RINS_EVERY == 0:
            self._rins(res.primal)

    def _rins(self, lp_x):
        """Sub-MIP over the integers on which the incumbent and ``lp_x`` disagree."""
        if self.best_x is None or self._gap() <= self.params.rel_gap:
            return
        idx = self.int_idx
        agree = np.abs(self.best_x[idx] - lp_x[idx]) <= INT_TOL
        if agree.all():
            return
        lb, ub = self.lb0.copy(), self.ub0.copy()
        lb[idx[agree]] = ub[idx[agree]] = self.best_x[idx[agree]]
        left = self.deadline - time.perf_counter()
        if left <= 0:
            return
        sub = SolverParams(time_limit_s=max(min(left, RINS_TIME_FRACTION * self.params.time_limit_s), 1e-3),
                           rel_gap=self.params.rel_gap / 10, node_limit=RINS_NODES)
        rep = _Search(self.model, sub, self.best_x, self.lp, lb, ub, heuristics=1).run()
        self.lp_iters += rep.lp_iterations
        if rep.incumbent is not None:
            self._offer(rep.incumbent)

    def _pop_deepest(self) -> _Node:
        k = min(range(len(self.heap)), key=lambda i: (-self.heap[i].depth, -self.heap[i].seq))
        node = self.heap[k]
        self.heap[k] = self.heap[-1]
        self.heap.pop()
        heapq.heapify(self.heap)
        return node

    def _prunable(self, bound) -> bool:
        if self.best_x is None:
            return False
        return bound <= self.best + 1e-9 * max(1.0, abs(self.best))

    def _process(self, res, node_lb, node_ub, depth):
        """Handle a solved node: update the incumbent or create children.

        Returns the preferred child for plunging (the other is queued).
        """
        bound = self.sign * res.objective
        if self._prunable(bound):
            return None
        x = res.primal
        j = self._branch_var(x)
        if j is None:
            self._offer(x)
            return None
        down, up = self._children(node_lb, node_ub, x, j, bound, res.basis, depth)
        if self.best_x is None:
            # dive towards the nearer integer, queue the other side
            first, second = (up, down) if x[j] - math.floor(x[j]) >= 0.5 else (down, up)
            heapq.heappush(self.heap, second)
            return first
        heapq.heappush(self.heap, down)
        heapq.heappush(self.heap, up)
        return None

    def _report(self, status, pending=None, refresh=True) -> SolveReport:
        extra = [pending.bound] if pending is not None else []
        if status in (STATUS_OPTIMAL,) and not self.heap:
            self.global_ub = self.best if self.best_x is not None else -math.inf
        elif refresh and status not in (STATUS_INFEASIBLE, STATUS_UNBOUNDED):
            self._refresh_bound(extra)
        if status == STATUS_UNBOUNDED:
            self.global_ub = math.inf
        if status == STATUS_INFEASIBLE:
            lb, ub = (-math.inf, -math.inf) if self.sign > 0 else (math.inf, math.inf)
            gap = math.inf
        else:
            lb, ub = self._bracket()
            gap = self._gap()
        if status == STATUS_OPTIMAL and self.best_x is not None and gap > self.params.rel_gap:
            status = STATUS_GAP_LIMIT  # defensive: never claim optimality outside the tolerance
        self._log(force=True)
        return SolveReport(status=status, incumbent=None if self.best_x is None else self.best_x.copy(),
                           objective_lb=lb, objective_ub=ub, gap=gap, nodes=self.nodes,
                           wall_time_s=time.perf_counter() - self.start, sense=self.model.sense,
                           lp_iterations=self.lp_iters)


def solve_milp(model: MilpModel, params: SolverParams | None = None, initial=None) -> SolveReport:
    """Branch-and-bound solve of ``model``.

    ``initial`` is an optional full-length starting point; it becomes the first
    incumbent if it is feasible.
    """
    return _Search(model, params or SolverParams(), initial).run()
