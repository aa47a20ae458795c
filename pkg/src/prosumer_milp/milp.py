"""Generic sparse MILP container, point evaluation and feasibility tolerance.

The model knows nothing about data centers; the builder in
:mod:`prosumer_milp.builder` fills it, and the LP / branch-and-bound solvers
consume it through :meth:`MilpModel.to_arrays`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
EQ = "="
GE = ">="

MAXIMIZE = "maximize"
MINIMIZE = "minimize"

FEAS_TOL = 1e-6


def allowed_violation(bound: float, tol: float = FEAS_TOL) -> float:
    """Slack allowed against ``bound``: absolute when |bound| <= 1, else relative.

    This is the single definition of feasibility shared by the solvers and the
    validator.
    """
    return tol if abs(bound) <= 1.0 else tol * abs(bound)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = 0.0
    upper: float = math.inf
    integrality: str = CONTINUOUS
    tag: str | None = None  # constraint family enforced through this variable's bounds


@dataclass(frozen=True)
class LinearConstraint:
    name: str
    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    tag: str | None = None


@dataclass(frozen=True)
class Violation:
    kind: str  # "constraint", "bound" or "integrality"
    name: str
    index: int
    residual: float


@dataclass
class MilpModel:
    sense: str = MAXIMIZE
    objective: dict[int, float] = field(default_factory=dict)
    variables: list[Variable] = field(default_factory=list)
    constraints: list[LinearConstraint] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)
    name: str = "model"

    def __post_init__(self):
        self._names: dict[str, int] = {v.name: i for i, v in enumerate(self.variables)}
        self._row_names: set[str] = {c.name for c in self.constraints}
        self._arrays = None

    # -- construction ----------------------------------------------------
    def add_variable(self, name, lower=0.0, upper=math.inf, integrality=CONTINUOUS,
                     tag=None, obj=0.0) -> int:
        if name in self._names:
            raise ModelError(f"duplicate variable name {name!r}")
        lower, upper = float(lower), float(upper)
        if lower > upper:
            raise ModelError(f"variable {name!r}: lower {lower} > upper {upper}")
        if integrality == BINARY and (lower < 0.0 or upper > 1.0):
            raise ModelError(f"binary variable {name!r} has bounds outside [0, 1]")
        idx = len(self.variables)
        self.variables.append(Variable(name, lower, upper, integrality, tag))
        self._names[name] = idx
        if obj:
            self.objective[idx] = float(obj)
        self._arrays = None
        return idx

    def add_constraint(self, name, terms, sense, rhs, tag=None) -> int:
        if name in self._row_names:
            raise ModelError(f"duplicate constraint name {name!r}")
        if sense not in (LE, EQ, GE):
            raise ModelError(f"constraint {name!r}: unknown sense {sense!r}")
        merged: dict[int, float] = {}
        for j, a in terms:
            if not 0 <= j < len(self.variables):
                raise ModelError(f"constraint {name!r}: variable index {j} out of range")
            merged[j] = merged.get(j, 0.0) + float(a)
        if not all(math.isfinite(a) for a in merged.values()):
            raise ModelError(f"constraint {name!r} has a non-finite coefficient")
        row = LinearConstraint(name, tuple((j, a) for j, a in merged.items() if a != 0.0),
                               sense, float(rhs), tag)
        self.constraints.append(row)
        self._row_names.add(name)
        self._arrays = None
        return len(self.constraints) - 1

    def set_objective(self, index: int, coef: float) -> None:
        if coef:
            self.objective[index] = float(coef)
        else:
            self.objective.pop(index, None)
        self._arrays = None

    def index_of(self, name: str) -> int:
        return self._names[name]

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_rows(self) -> int:
        return len(self.constraints)

    def integer_indices(self) -> np.ndarray:
        return np.array([i for i, v in enumerate(self.variables) if v.integrality == BINARY],
                        dtype=np.int64)

    def tags(self) -> dict[str, list[int]]:
        """Constraint indices grouped by equation tag."""
        out: dict[str, list[int]] = {}
        for i, c in enumerate(self.constraints):
            out.setdefault(c.tag, []).append(i)
        return out

    def to_arrays(self):
        """Return ``(c, A, row_lo, row_hi, lb, ub, is_int)`` with ``A`` in CSR form.

        Cached until the model is modified through its own methods.
        """
        if self._arrays is not None:
            return self._arrays
        n, m = self.num_vars, self.num_rows
        c = np.zeros(n)
        for j, a in self.objective.items():
            c[j] = a
        rows, cols, vals = [], [], []
        row_lo = np.full(m, -np.inf)
        row_hi = np.full(m, np.inf)
        for i, con in enumerate(self.constraints):
            for j, a in con.terms:
                rows.append(i)
                cols.append(j)
                vals.append(a)
            if con.sense in (LE, EQ):
                row_hi[i] = con.rhs
            if con.sense in (GE, EQ):
                row_lo[i] = con.rhs
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n), dtype=float)
        lb = np.array([v.lower for v in self.variables], dtype=float)
        ub = np.array([v.upper for v in self.variables], dtype=float)
        is_int = np.array([v.integrality == BINARY for v in self.variables], dtype=bool)
        self._arrays = (c, A, row_lo, row_hi, lb, ub, is_int)
        return self._arrays

    def relaxed(self) -> "MilpModel":
        """Copy of the model with every integrality requirement dropped."""
        out = MilpModel(self.sense, dict(self.objective),
                        [Variable(v.name, v.lower, v.upper, CONTINUOUS, v.tag) for v in self.variables],
                        list(self.constraints), dict(self.metadata), self.name)
        return out

    def copy(self) -> "MilpModel":
        return MilpModel(self.sense, dict(self.objective), list(self.variables),
                         list(self.constraints), dict(self.metadata), self.name)

    def fixed(self, values: dict[int, float]) -> "MilpModel":
        """Copy with ``lower = upper = value`` for each index in ``values``."""
        out = self.copy()
        for j, val in values.items():
            v = out.variables[j]
            out.variables[j] = Variable(v.name, float(val), float(val), v.integrality, v.tag)
        return out

    def structurally_equal(self, other: "MilpModel", names: bool = True) -> bool:
        """Compare sense, objective, bounds, integrality and rows (tags ignored)."""
        if self.sense != other.sense or self.num_vars != other.num_vars \
                or self.num_rows != other.num_rows:
            return False
        if {j: a for j, a in self.objective.items() if a} != \
                {j: a for j, a in other.objective.items() if a}:
            return False
        for a, b in zip(self.variables, other.variables):
            if (a.lower, a.upper, a.integrality) != (b.lower, b.upper, b.integrality):
                return False
            if names and a.name != b.name:
                return False
        for a, b in zip(self.constraints, other.constraints):
            if (a.sense, a.rhs) != (b.sense, b.rhs) or sorted(a.terms) != sorted(b.terms):
                return False
            if names and a.name != b.name:
                return False
        return True


def evaluate(model: MilpModel, point, tol: float = FEAS_TOL):
    """Objective value of ``point`` and every bound, row or integrality breach.

    Returns a dict ``{"objective": float, "violations": [Violation, ...]}``.
    """
    x = np.asarray(point, dtype=float)
    if x.shape != (model.num_vars,):
        raise ModelError(f"point has shape {x.shape}, model has {model.num_vars} variables")
    c, A, row_lo, row_hi, lb, ub, is_int = model.to_arrays()
    violations: list[Violation] = []
    for j in range(model.num_vars):
        v = x[j]
        if not math.isfinite(v):
            violations.append(Violation("bound", model.variables[j].name, j, math.inf))
            continue
        if v < lb[j] - allowed_violation(lb[j], tol):
            violations.append(Violation("bound", model.variables[j].name, j, lb[j] - v))
        elif v > ub[j] + allowed_violation(ub[j], tol):
            violations.append(Violation("bound", model.variables[j].name, j, v - ub[j]))
        if is_int[j] and abs(v - round(v)) > tol:
            violations.append(Violation("integrality", model.variables[j].name, j,
                                        abs(v - round(v))))
    act = A @ x if model.num_rows else np.zeros(0)
    for i in range(model.num_rows):
        if act[i] < row_lo[i] - allowed_violation(row_lo[i], tol):
            violations.append(Violation("constraint", model.constraints[i].name, i,
                                        row_lo[i] - act[i]))
        elif act[i] > row_hi[i] + allowed_violation(row_hi[i], tol):
            violations.append(Violation("constraint", model.constraints[i].name, i,
                                        act[i] - row_hi[i]))
    return {"objective": float(c @ x), "violations": violations}
