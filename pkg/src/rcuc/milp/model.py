"""Model container for mixed-binary linear programs (minimisation only)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "=", ">="
_SENSES = (LE, EQ, GE)

OPTIMAL = "Optimal"
FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
GAP_REACHED = "GapReached"
UNKNOWN = "InfeasibleOrUnknown"


class ModelError(ValueError):
    pass


@dataclass
class Variable:
    name: str
    lower: float = 0.0
    upper: float = math.inf
    binary: bool = False


@dataclass
class Constraint:
    index: np.ndarray
    value: np.ndarray
    sense: str
    rhs: float
    name: str = ""


class MilpModel:
    """Variables, sparse linear rows and a linear objective.

    Variables are referred to by the integer handle returned from
    :meth:`add_var`.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self._names: dict[str, int] = {}

    # -- building -------------------------------------------------------

    def add_var(self, name: str | None = None, lower: float = 0.0, upper: float = math.inf,
                binary: bool = False) -> int:
        idx = len(self.variables)
        if name is None:
            name = f"x{idx}"
        if name in self._names:
            raise ModelError(f"duplicate variable name {name!r}")
        if binary:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        self.variables.append(Variable(name, float(lower), float(upper), binary))
        self._names[name] = idx
        return idx

    def add_constraint(self, coeffs, sense: str, rhs: float, name: str = "") -> int:
        """Add ``sum(coef * x) sense rhs``; ``coeffs`` is a dict or (var, value) pairs."""
        if sense not in _SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        merged: dict[int, float] = {}
        for v, c in items:
            merged[v] = merged.get(v, 0.0) + float(c)
        idx = np.fromiter(merged.keys(), dtype=np.int64, count=len(merged))
        val = np.fromiter(merged.values(), dtype=float, count=len(merged))
        nz = val != 0.0
        self.constraints.append(Constraint(idx[nz], val[nz], sense, float(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, coeffs, constant: float = 0.0) -> None:
        self.objective = {}
        self.add_objective(coeffs)
        self.objective_constant = float(constant)

    def add_objective(self, coeffs) -> None:
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        for v, c in items:
            self.objective[v] = self.objective.get(v, 0.0) + float(c)

    def fix(self, var: int, value: float) -> None:
        self.variables[var].lower = self.variables[var].upper = float(value)

    def var(self, name: str) -> int:
        return self._names[name]

    def copy(self) -> "MilpModel":
        out = MilpModel(self.name)
        out.variables = [Variable(v.name, v.lower, v.upper, v.binary) for v in self.variables]
        out.constraints = [Constraint(c.index.copy(), c.value.copy(), c.sense, c.rhs, c.name)
                           for c in self.constraints]
        out.objective = dict(self.objective)
        out.objective_constant = self.objective_constant
        out._names = dict(self._names)
        return out

    def relaxed(self) -> "MilpModel":
        out = self.copy()
        for v in out.variables:
            v.binary = False
        return out

    # -- inspection -----------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def n_binaries(self) -> int:
        return sum(v.binary for v in self.variables)

    def validate(self) -> None:
        n = self.n_vars
        for v in self.variables:
            if math.isnan(v.lower) or math.isnan(v.upper):
                raise ModelError(f"variable {v.name} has NaN bounds")
            if v.binary and (v.lower < 0 or v.upper > 1):
                raise ModelError(f"binary {v.name} has bounds outside [0, 1]")
        for k, c in enumerate(self.constraints):
            if c.index.size and (c.index.min() < 0 or c.index.max() >= n):
                raise ModelError(f"constraint {c.name or k} references a missing variable")
            if not np.all(np.isfinite(c.value)) or not math.isfinite(c.rhs):
                raise ModelError(f"constraint {c.name or k} has non-finite data")
        for v, c in self.objective.items():
            if not 0 <= v < n:
                raise ModelError("objective references a missing variable")
            if not math.isfinite(c):
                raise ModelError("objective has non-finite coefficients")

    def arrays(self) -> "ModelArrays":
        n = self.n_vars
        rows, cols, vals = [], [], []
        for k, c in enumerate(self.constraints):
            rows.append(np.full(c.index.size, k))
            cols.append(c.index)
            vals.append(c.value)
        m = self.n_constraints
        if m:
            A = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, n)
            )
        else:
            A = sp.csr_matrix((0, n))
        c = np.zeros(n)
        for v, coef in self.objective.items():
            c[v] = coef
        return ModelArrays(
            c=c,
            A=A,
            sense=np.array([k.sense for k in self.constraints], dtype=object),
            rhs=np.array([k.rhs for k in self.constraints], dtype=float),
            lb=np.array([v.lower for v in self.variables], dtype=float),
            ub=np.array([v.upper for v in self.variables], dtype=float),
            binary=np.array([v.binary for v in self.variables], dtype=bool),
            constant=self.objective_constant,
        )

    def objective_value(self, x) -> float:
        return float(sum(c * x[v] for v, c in self.objective.items()) + self.objective_constant)

    def max_violation(self, x) -> float:
        """Largest absolute violation of any bound or row; independent of any solver."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for k, v in enumerate(self.variables):
            worst = max(worst, v.lower - x[k], x[k] - v.upper)
        for c in self.constraints:
            lhs = float(np.dot(c.value, x[c.index]))
            if c.sense == LE:
                worst = max(worst, lhs - c.rhs)
            elif c.sense == GE:
                worst = max(worst, c.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - c.rhs))
        return worst

    def integrality_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        b = [k for k, v in enumerate(self.variables) if v.binary]
        if not b:
            return 0.0
        xb = x[b]
        return float(np.max(np.abs(xb - np.round(xb))))


@dataclass
class ModelArrays:
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    constant: float = 0.0

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    iterations: int = 0


@dataclass
class MilpSolution:
    status: str
    values: np.ndarray | None
    objective_value: float
    best_bound: float
    relative_gap: float
    nodes: int = 0
    time_s: float = 0.0
    names: dict = field(default_factory=dict, repr=False)

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    def __getitem__(self, var: int) -> float:
        return float(self.values[var])


def relative_gap(objective: float, bound: float) -> float:
    if not math.isfinite(objective):
        return math.inf
    if not math.isfinite(bound):
        return math.inf
    return max(0.0, (objective - bound) / max(1.0, abs(objective)))
