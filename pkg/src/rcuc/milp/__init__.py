from .bnb import SolverError, presolve, solve_lp, solve_milp
from .lpformat import to_lp_string, write_lp
from .model import (
    EQ,
    FEASIBLE,
    GAP_REACHED,
    GE,
    INFEASIBLE,
    LE,
    OPTIMAL,
    UNBOUNDED,
    UNKNOWN,
    LpResult,
    MilpModel,
    MilpSolution,
    ModelError,
    relative_gap,
)

__all__ = [
    "EQ",
    "FEASIBLE",
    "GAP_REACHED",
    "GE",
    "INFEASIBLE",
    "LE",
    "OPTIMAL",
    "UNBOUNDED",
    "UNKNOWN",
    "LpResult",
    "MilpModel",
    "MilpSolution",
    "ModelError",
    "SolverError",
    "presolve",
    "relative_gap",
    "solve_lp",
    "solve_milp",
    "to_lp_string",
    "write_lp",
]
