"""Bounded-variable revised simplex used as the LP relaxation oracle.

Every row ``a_i x`` gets a logical variable ``r_i`` with ``a_i x - r_i = 0`` and
row bounds on ``r_i``, so the working system is ``[A, -I] z = 0`` with simple
bounds on every component of ``z``.  Nonbasic variables sit at a bound (or at
zero when free); bounds are never turned into rows.

Primal simplex runs in two phases (minimise the sum of basic bound
infeasibilities, then the true objective).  A dual simplex re-optimises after
bound changes, which is how branch-and-bound warm starts its children.

The basis is factorised with SuperLU and updated in product form; it is
refactorised every ``REFACTOR_EVERY`` pivots.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .milp import MAXIMIZE, MilpModel

BASIC = 0
AT_LB = 1
AT_UB = 2
FREE = 3

REFACTOR_EVERY = 60
PIVOT_TOL = 1e-7
COST_PERTURBATION = 5e-7
HARRIS_TOL = 1e-7  # dual infeasibility tolerated by the dual ratio test

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
CUTOFF = "cutoff"


class SingularBasis(RuntimeError):
    pass


@dataclass
class Basis:
    """Warm-start information: variable status (structurals then rows) and basic list."""

    status: np.ndarray
    basic: np.ndarray

    def copy(self) -> "Basis":
        return Basis(self.status.copy(), self.basic.copy())


@dataclass
class LpResult:
    status: str
    objective: float
    primal: np.ndarray
    dual: np.ndarray
    reduced_costs: np.ndarray
    iterations: int
    row_activity: np.ndarray | None = None
    basis: Basis | None = None
    farkas: np.ndarray | None = None
    ray: np.ndarray | None = None
    conclusive: bool = True


class _Factor:
    """LU of the basis matrix plus a product-form eta file."""

    def __init__(self, B):
        try:
            self.lu = splu(sp.csc_matrix(B))
        except RuntimeError as exc:
            raise SingularBasis(str(exc)) from exc
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        y = self.lu.solve(a)
        for r, alpha in self.etas:
            yr = y[r] / alpha[r]
            if yr != 0.0:
                y -= yr * alpha
            y[r] = yr
        return y

    def btran(self, e: np.ndarray) -> np.ndarray:
        v = e.astype(float, copy=True)
        for r, alpha in reversed(self.etas):
            vr = v[r]
            v[r] = (vr - (alpha @ v - alpha[r] * vr)) / alpha[r]
        return self.lu.solve(v, trans="T")

    def update(self, r: int, alpha: np.ndarray) -> None:
        self.etas.append((r, alpha.copy()))


class SimplexLP:
    """An LP in array form that can be re-solved under different bounds.

    ``sense`` is ``"maximize"`` or ``"minimize"``; internally the objective is
    always minimised.
    """

    def __init__(self, c, A, row_lo, row_hi, lb, ub, sense=MAXIMIZE):
        self.A = sp.csr_matrix(A, dtype=float)
        self.At = self.A.T.tocsr()
        self.Acsc = self.A.tocsc()
        self.m, self.n = self.A.shape
        self.sign = -1.0 if sense == MAXIMIZE else 1.0
        self.c = np.asarray(c, dtype=float)
        self.cost = np.concatenate([self.sign * self.c, np.zeros(self.m)])
        self.row_lo = np.asarray(row_lo, dtype=float)
        self.row_hi = np.asarray(row_hi, dtype=float)
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)

    @classmethod
    def from_model(cls, model: MilpModel) -> "SimplexLP":
        c, A, row_lo, row_hi, lb, ub, _ = model.to_arrays()
        return cls(c, A, row_lo, row_hi, lb, ub, model.sense)

    # -- helpers -------------------------------------------------------------
    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        if j < self.n:
            start, end = self.Acsc.indptr[j], self.Acsc.indptr[j + 1]
            col[self.Acsc.indices[start:end]] = self.Acsc.data[start:end]
        else:
            col[j - self.n] = -1.0
        return col

    def _row_alpha(self, rho: np.ndarray) -> np.ndarray:
        """rho^T M for every column of M = [A, -I]."""
        return np.concatenate([self.At @ rho, -rho])

    def _basis_matrix(self, basic: np.ndarray):
        struct = basic[basic < self.n]
        logic = basic[basic >= self.n] - self.n
        pos_s = np.nonzero(basic < self.n)[0]
        pos_l = np.nonzero(basic >= self.n)[0]
        Bs = self.Acsc[:, struct].tocoo()
        rows = np.concatenate([Bs.row, logic])
        cols = np.concatenate([pos_s[Bs.col], pos_l])
        vals = np.concatenate([Bs.data, -np.ones(len(logic))])
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.m, self.m))

    def slack_basis(self, L, U) -> Basis:
        status = np.empty(self.n + self.m, dtype=np.int8)
        s = status[: self.n]
        s[:] = FREE
        fin_l, fin_u = np.isfinite(L[: self.n]), np.isfinite(U[: self.n])
        s[fin_u] = AT_UB
        s[fin_l] = AT_LB
        # boxed columns sit at the bound their cost prefers, which often makes
        # the slack basis dual feasible
        s[fin_l & fin_u & (self.cost[: self.n] < 0)] = AT_UB
        status[self.n:] = BASIC
        return Basis(status, np.arange(self.n, self.n + self.m))

    # -- main entry point ------------------------------------------------------
    def solve(self, lb=None, ub=None, basis: Basis | None = None, tol: float = 1e-9,
              max_iters: int | None = None, cutoff: float | None = None,
              deadline: float | None = None) -> LpResult:
        """Solve under optional bound overrides, warm-starting from ``basis``.

        ``cutoff`` is in the caller's objective sense: the dual simplex stops
        with status ``"cutoff"`` once the bound proves the optimum cannot beat it.
        """
        L = np.concatenate([self.lb if lb is None else np.asarray(lb, float), self.row_lo])
        U = np.concatenate([self.ub if ub is None else np.asarray(ub, float), self.row_hi])
        if np.any(L > U + tol):
            return self._trivially_infeasible(L, U)
        state = _State(self, L, U, basis, tol, max_iters, deadline)
        internal_cutoff = None if cutoff is None else self.sign * cutoff
        return state.run(internal_cutoff)

    def _trivially_infeasible(self, L, U) -> LpResult:
        n, m = self.n, self.m
        return LpResult(INFEASIBLE, np.nan, np.full(n, np.nan), np.zeros(m), np.zeros(n), 0)


class _State:
    def __init__(self, lp: SimplexLP, L, U, basis, tol, max_iters, deadline=None):
        self.lp = lp
        self.deadline = deadline
        self.L, self.U = L, U
        self.tol = tol
        self.dtol = tol
        self.N = lp.n + lp.m
        self.max_iters = max_iters if max_iters is not None else 50 * self.N + 1000
        self.iters = 0
        self.warm = basis is not None
        b = lp.slack_basis(L, U) if basis is None else basis.copy()
        self.status, self.basic = b.status, b.basic
        # a warm-start status must agree with the (possibly changed) bounds
        nb = self.status != BASIC
        fin_l, fin_u = np.isfinite(L), np.isfinite(U)
        bad_lb = nb & (self.status == AT_LB) & ~fin_l
        bad_ub = nb & (self.status == AT_UB) & ~fin_u
        self.status[bad_lb] = np.where(fin_u[bad_lb], AT_UB, FREE)
        self.status[bad_ub] = np.where(fin_l[bad_ub], AT_LB, FREE)
        free_fix = nb & (self.status == FREE) & (fin_l | fin_u)
        self.status[free_fix] = np.where(fin_l[free_fix], AT_LB, AT_UB)
        self.x = np.zeros(self.N)
        self.cost = lp.cost
        self.dse = np.ones(lp.m)
        self.L0, self.U0 = L, U
        self.perturbed = False
        self.perturb_done = False
        self.degenerate = 0
        self.bland = False
        self._refactor()

    # -- basis bookkeeping -----------------------------------------------------------
    def _refactor(self):
        lp = self.lp
        try:
            self.factor = _Factor(lp._basis_matrix(self.basic))
        except SingularBasis:
            self._repair_basis()
            self.factor = _Factor(lp._basis_matrix(self.basic))
        self.since_refactor = 0
        self._set_nonbasic_values()
        self._compute_basic_values()

    def _repair_basis(self):
        """Swap dependent basic columns for logicals until the basis is regular."""
        lp = self.lp
        B = lp._basis_matrix(self.basic).toarray()
        q, r = np.linalg.qr(B)
        weak = np.nonzero(np.abs(np.diag(r)) < 1e-9)[0]
        used = set(int(j) - lp.n for j in self.basic if j >= lp.n)
        free_rows = [i for i in range(lp.m) if i not in used]
        for pos in weak:
            if not free_rows:
                break
            old = self.basic[pos]
            self.status[old] = AT_LB if np.isfinite(self.L[old]) else (
                AT_UB if np.isfinite(self.U[old]) else FREE)
            i = free_rows.pop()
            self.basic[pos] = lp.n + i
            self.status[lp.n + i] = BASIC
        self.dse = np.ones(lp.m)

    def _set_nonbasic_values(self):
        s = self.status
        self.x[s == AT_LB] = self.L[s == AT_LB]
        self.x[s == AT_UB] = self.U[s == AT_UB]
        self.x[s == FREE] = 0.0

    def _compute_basic_values(self):
        lp = self.lp
        xs = self.x[: lp.n].copy()
        xs[self.status[: lp.n] == BASIC] = 0.0
        xr = self.x[lp.n:].copy()
        xr[self.status[lp.n:] == BASIC] = 0.0
        rhs = -(lp.A @ xs - xr)
        self.x[self.basic] = self.factor.ftran(rhs)

    def _pivot(self, r: int, q: int, alpha: np.ndarray, leave_status: int):
        leaving = self.basic[r]
        self.status[leaving] = leave_status
        self.status[q] = BASIC
        self.basic[r] = q
        self.factor.update(r, alpha)
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self._refactor()

    def _reduced(self, phase1: bool):
        if phase1:
            cB = self._phase1_costs()
            y = self.factor.btran(cB)
            d = -self.lp._row_alpha(y)
        else:
            cB = self.cost[self.basic]
            y = self.factor.btran(cB)
            d = self.cost - self.lp._row_alpha(y)
        d[self.basic] = 0.0
        return y, d

    def _phase1_costs(self):
        xb = self.x[self.basic]
        Lb, Ub = self.L[self.basic], self.U[self.basic]
        cB = np.zeros(len(xb))
        cB[xb < Lb - self._ptol(Lb)] = -1.0
        cB[xb > Ub + self._ptol(Ub)] = 1.0
        return cB

    def _ptol(self, bound):
        return self.tol * np.maximum(1.0, np.abs(np.where(np.isfinite(bound), bound, 0.0)))

    def infeasibility(self) -> float:
        xb = self.x[self.basic]
        Lb, Ub = self.L[self.basic], self.U[self.basic]
        below = np.where(xb < Lb - self._ptol(Lb), Lb - xb, 0.0)
        above = np.where(xb > Ub + self._ptol(Ub), xb - Ub, 0.0)
        return float(below.sum() + above.sum())

    def _dual_infeasible(self, d) -> bool:
        s = self.status
        fixed = self.L == self.U
        bad = ((s == AT_LB) & (d < -self.dtol)) | ((s == AT_UB) & (d > self.dtol)) \
            | ((s == FREE) & (np.abs(d) > self.dtol))
        return bool(np.any(bad & ~fixed))

    # -- driver ------------------------------------------------------------------------
    def run(self, cutoff):
        if self.infeasibility() > 0.0:
            _, d = self._reduced(False)
            if not self._dual_infeasible(d):
                status = self._dual_simplex(cutoff)
                if status in (INFEASIBLE, CUTOFF, ITERATION_LIMIT):
                    return self._result(status)
        for _ in range(3):
            status = self._primal(phase1=True)
            if status == ITERATION_LIMIT:
                return self._result(status)
            if self.infeasibility() > 0.0:
                if self.perturbed:
                    self._unperturb()
                    continue
                return self._result(INFEASIBLE)
            status = self._primal(phase1=False)
            if status != OPTIMAL:
                if self.perturbed and status == UNBOUNDED:
                    self._unperturb()
                    continue
                return self._result(status)
            if self.perturbed:
                self._unperturb()
                if self.infeasibility() > 0.0:
                    status = self._dual_simplex(None)
                    if status == ITERATION_LIMIT:
                        return self._result(status)
                    if status == INFEASIBLE:
                        continue
                status = self._primal(phase1=False)
            # final clean-up on a fresh factorisation
            self._refactor()
            if self.infeasibility() == 0.0 and status == OPTIMAL:
                _, d = self._reduced(False)
                if not self._dual_infeasible(d):
                    return self._result(OPTIMAL)
        return self._result(status)

    def _out_of_budget(self) -> bool:
        if self.iters >= self.max_iters:
            return True
        return self.deadline is not None and self.iters % 20 == 0 and time.perf_counter() > self.deadline

    def _perturb(self):
        """Widen every finite bound of a non-fixed variable by a small random amount."""
        rng = np.random.default_rng(20240917)
        L, U = self.L0.copy(), self.U0.copy()
        movable = L < U
        scale = 5e-7 * (1.0 + rng.random(self.N))
        lo = movable & np.isfinite(L)
        hi = movable & np.isfinite(U)
        L[lo] -= scale[lo] * (1.0 + np.abs(L[lo]))
        U[hi] += scale[hi] * (1.0 + np.abs(U[hi]))
        self.L, self.U = L, U
        self.perturbed = True
        self._set_nonbasic_values()
        self._compute_basic_values()

    def _unperturb(self):
        self.L, self.U = self.L0, self.U0
        self.perturbed = False
        self.perturb_done = True
        self._set_nonbasic_values()
        self._compute_basic_values()

    # -- primal simplex ------------------------------------------------------------------
    def _primal(self, phase1: bool):
        lp = self.lp
        self.degenerate = 0
        self.bland = False
        bland_after = 5 * (lp.m + lp.n)
        stalled = 0
        while True:
            if phase1 and self.infeasibility() == 0.0:
                return OPTIMAL
            if self._out_of_budget():
                return ITERATION_LIMIT
            y, d = self._reduced(phase1)
            s = self.status
            movable = self.L != self.U
            score = np.zeros(self.N)
            up = (s == AT_LB) & (d < -self.dtol)
            dn = (s == AT_UB) & (d > self.dtol)
            fr = (s == FREE) & (np.abs(d) > self.dtol)
            cand = (up | dn | fr) & movable
            if not cand.any():
                self._last_y, self._last_d = y, d
                return OPTIMAL
            if self.bland:
                q = int(np.argmax(cand))
            else:
                score[cand] = np.abs(d[cand])
                q = int(np.argmax(score))
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.factor.ftran(lp._column(q))
            # basic variables move by delta * theta
            delta = -direction * alpha
            r, theta, leave_status = self._primal_ratio(delta, q, phase1)
            self.iters += 1
            if r is None and theta == np.inf:
                if phase1:
                    # cannot happen with exact arithmetic; treat as numerical trouble
                    self._refactor()
                    continue
                ray = np.zeros(self.N)
                ray[q] = direction
                ray[self.basic] = delta
                self._ray = ray
                self._last_y, self._last_d = y, d
                return UNBOUNDED
            if theta <= 1e-12:
                self.degenerate += 1
                stalled += 1
                if stalled > 20 and not self.perturbed and not self.perturb_done:
                    self._perturb()
                    stalled = 0
                    continue
                if self.degenerate > bland_after:
                    self.bland = True
            else:
                stalled = 0
            self.x[self.basic] += theta * delta
            self.x[q] += direction * theta
            if r is None:
                # bound flip of the entering variable
                s[q] = AT_UB if direction > 0 else AT_LB
                self.x[q] = self.U[q] if direction > 0 else self.L[q]
                continue
            leaving = self.basic[r]
            self.x[leaving] = self.L[leaving] if leave_status == AT_LB else self.U[leaving]
            self._pivot(r, q, alpha, leave_status)

    def _primal_ratio(self, delta, q, phase1):
        """Harris two-pass ratio test; returns (row, step, leaving status)."""
        xb = self.x[self.basic]
        Lb, Ub = self.L[self.basic], self.U[self.basic]
        tl, tu = self._ptol(Lb), self._ptol(Ub)
        big = np.abs(delta) > PIVOT_TOL
        dec = big & (delta < 0)
        inc = big & (delta > 0)
        if phase1:
            below = xb < Lb - tl
            above = xb > Ub + tu
            # decreasing: feasible ones stop at L, ones above U stop at U,
            # ones below L are unconstrained
            dec_bound = np.where(above, Ub, Lb)
            dec_ok = dec & ~below & np.isfinite(dec_bound)
            inc_bound = np.where(below, Lb, Ub)
            inc_ok = inc & ~above & np.isfinite(inc_bound)
            dec_stat = np.where(above, AT_UB, AT_LB)
            inc_stat = np.where(below, AT_LB, AT_UB)
            dec_tol = np.where(above, tu, tl)
            inc_tol = np.where(below, tl, tu)
        else:
            dec_bound, inc_bound = Lb, Ub
            dec_ok = dec & np.isfinite(Lb)
            inc_ok = inc & np.isfinite(Ub)
            dec_stat = np.full(len(xb), AT_LB)
            inc_stat = np.full(len(xb), AT_UB)
            dec_tol, inc_tol = tl, tu
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.full(len(xb), np.inf)
            relaxed = np.full(len(xb), np.inf)
            ratio[dec_ok] = (xb[dec_ok] - dec_bound[dec_ok]) / -delta[dec_ok]
            relaxed[dec_ok] = (xb[dec_ok] - dec_bound[dec_ok] + dec_tol[dec_ok]) / -delta[dec_ok]
            ratio[inc_ok] = (inc_bound[inc_ok] - xb[inc_ok]) / delta[inc_ok]
            relaxed[inc_ok] = (inc_bound[inc_ok] - xb[inc_ok] + inc_tol[inc_ok]) / delta[inc_ok]
        flip = self.U[q] - self.L[q]
        tmax = relaxed.min() if len(relaxed) else np.inf
        if not np.isfinite(tmax) and not np.isfinite(flip):
            return None, np.inf, None
        if flip <= tmax:
            return None, max(flip, 0.0), None
        elig = np.nonzero(ratio <= tmax)[0]
        if self.bland:
            # smallest variable index among the minimum ratios
            best = ratio[elig].min()
            ties = elig[ratio[elig] <= best + 1e-12]
            r = int(ties[np.argmin(self.basic[ties])])
        else:
            r = int(elig[np.argmax(np.abs(delta[elig]))])
        theta = max(ratio[r], 0.0)
        stat = dec_stat[r] if delta[r] < 0 else inc_stat[r]
        return r, theta, int(stat)

    # -- dual simplex --------------------------------------------------------------------
    def _dual_simplex(self, cutoff):
        try:
            return self._dual_loop(cutoff)
        finally:
            # optimality under perturbed costs is cleaned up by the primal simplex
            self.cost = self.lp.cost

    def _perturb_costs(self):
        """Shift nonbasic costs away from zero reduced cost, keeping dual feasibility."""
        rng = np.random.default_rng(20240918)
        c = self.lp.cost.copy()
        delta = COST_PERTURBATION * (1.0 + np.abs(c)) * (1.0 + rng.random(self.N))
        st = self.status
        movable = self.L != self.U
        c[(st == AT_LB) & movable] += delta[(st == AT_LB) & movable]
        c[(st == AT_UB) & movable] -= delta[(st == AT_UB) & movable]
        self.cost = c

    def _dual_loop(self, cutoff):
        lp = self.lp
        stalled = 0
        degenerate = 0
        bland = False
        bland_after = 5 * (lp.m + lp.n)
        d = None
        retried = False
        while True:
            if self._out_of_budget():
                return ITERATION_LIMIT
            xb = self.x[self.basic]
            Lb, Ub = self.L[self.basic], self.U[self.basic]
            below = np.where(xb < Lb - self._ptol(Lb), Lb - xb, 0.0)
            above = np.where(xb > Ub + self._ptol(Ub), xb - Ub, 0.0)
            viol = below + above
            if not viol.any():
                return OPTIMAL
            if cutoff is not None and self.cost is lp.cost \
                    and float(lp.cost @ self.x) > cutoff + 1e-9 * max(1.0, abs(cutoff)):
                return CUTOFF
            if d is None or self.since_refactor == 0:
                _, d = self._reduced(False)
            if bland:
                cand = np.nonzero(viol)[0]
                r = int(cand[np.argmin(self.basic[cand])])
            else:
                r = int(np.argmax(viol * viol / self.dse))
            to_lower = below[r] > 0
            s_dir = 1.0 if to_lower else -1.0
            e = np.zeros(lp.m)
            e[r] = 1.0
            rho = self.factor.btran(e)
            alpha_row = lp._row_alpha(rho)
            st = self.status
            movable = self.L != self.U
            sa = s_dir * alpha_row
            elig = movable & (st != BASIC) & (np.abs(alpha_row) > PIVOT_TOL) & (
                ((st == AT_LB) & (sa < 0)) | ((st == AT_UB) & (sa > 0)) | (st == FREE))
            idx = np.nonzero(elig)[0]
            if len(idx) == 0:
                if self.since_refactor and not retried:
                    retried = True
                    self._refactor()
                    continue
                self.iters += 1
                self._farkas_internal = -s_dir * rho
                return INFEASIBLE
            # dual step size; reduced costs of the wrong sign count as zero
            stat = st[idx]
            ad = np.maximum(np.where(stat == AT_LB, d[idx], -d[idx]), 0.0)
            ad[stat == FREE] = np.abs(d[idx][stat == FREE])
            aa = np.abs(alpha_row[idx])
            ratios = ad / aa
            # long step: boxed candidates are flipped to their other bound while
            # the slope of the dual objective stays positive
            if bland:
                order = np.argsort(idx)
                p = 0
            else:
                order = np.argsort(ratios, kind="stable")
                span = (self.U - self.L)[idx[order]]
                slope = viol[r] - np.cumsum(aa[order] * np.where(np.isfinite(span), span, np.inf))
                if not (slope <= 0).any():
                    # even every bound flip leaves row r infeasible
                    if self.since_refactor and not retried:
                        retried = True
                        self._refactor()
                        continue
                    self.iters += 1
                    self._farkas_internal = -s_dir * rho
                    return INFEASIBLE
                p = int(np.argmax(slope <= 0))
            rest = order[p:]
            k = int(rest[0])
            if not bland:
                for htol in (HARRIS_TOL, 1e3 * HARRIS_TOL):
                    tmax = ((ad[rest] + htol) / aa[rest]).min()
                    near = rest[ratios[rest] <= tmax]
                    k = int(near[np.argmax(aa[near])])
                    if aa[k] >= 1e-5:
                        break
            q = int(idx[k])
            flips = idx[order[:p]]
            alpha = self.factor.ftran(lp._column(q))
            if abs(alpha[r] - alpha_row[q]) > 1e-6 * max(1.0, abs(alpha_row[q])) and self.since_refactor:
                self._refactor()
                d = None
                continue
            retried = False
            self.iters += 1
            if ratios[k] <= 1e-12:
                degenerate += 1
                stalled += 1
                if degenerate > bland_after:
                    bland = True
                if stalled > 30 and self.cost is lp.cost:
                    self._perturb_costs()
                    d = None
                    continue
            else:
                stalled = 0
            if len(flips):
                to_ub = st[flips] == AT_LB
                newv = np.where(to_ub, self.U[flips], self.L[flips])
                step_x = newv - self.x[flips]
                st[flips] = np.where(to_ub, AT_UB, AT_LB)
                self.x[flips] = newv
                col = lp.A[:, flips[flips < lp.n]] @ step_x[flips < lp.n]
                logic = flips >= lp.n
                np.subtract.at(col, flips[logic] - lp.n, step_x[logic])
                self.x[self.basic] -= self.factor.ftran(col)
            leaving = self.basic[r]
            target = self.L[leaving] if to_lower else self.U[leaving]
            theta = (self.x[leaving] - target) / alpha[r]
            self.x[self.basic] -= theta * alpha
            self.x[q] += theta
            self.x[leaving] = target
            step = d[q] / alpha_row[q]
            d = d - step * alpha_row
            d[q] = 0.0
            d[leaving] = -step
            # dual steepest-edge weights: squared norms of the rows of B^-1
            tau = self.factor.ftran(rho)
            ratio = alpha / alpha[r]
            w_r = float(rho @ rho)
            self.dse = np.maximum(self.dse - 2.0 * ratio * tau + ratio * ratio * w_r, 1e-6)
            self.dse[r] = max(w_r / alpha[r] ** 2, 1e-6)
            self._pivot(r, q, alpha, AT_LB if to_lower else AT_UB)

    # -- results ----------------------------------------------------------------------------
    def _result(self, status) -> LpResult:
        lp = self.lp
        n = lp.n
        y, d = self._reduced(False)
        y[self.status[n:] == BASIC] = 0.0  # basic slack: exact complementary slackness
        farkas = ray = None
        if status == INFEASIBLE:
            if hasattr(self, "_farkas_internal"):
                farkas = self._farkas_internal
            else:
                farkas = self.factor.btran(self._phase1_costs())
        if status == UNBOUNDED:
            ray = self._ray[:n].copy()
        x = self.x[:n].copy()
        obj = float(lp.c @ x)
        return LpResult(
            status=status,
            objective={UNBOUNDED: -lp.sign * np.inf, INFEASIBLE: np.nan}.get(status, obj),
            primal=x,
            dual=lp.sign * y,
            reduced_costs=lp.sign * d[:n],
            iterations=self.iters,
            row_activity=self.x[n:].copy(),
            basis=Basis(self.status.copy(), self.basic.copy()),
            farkas=farkas,
            ray=ray,
            conclusive=status != ITERATION_LIMIT,
        )


def solve_lp(model: MilpModel, tol: float = 1e-9, max_iters: int | None = None,
             basis: Basis | None = None) -> LpResult:
    """Solve the LP relaxation of ``model`` (integrality is ignored)."""
    return SimplexLP.from_model(model).solve(basis=basis, tol=tol, max_iters=max_iters)
