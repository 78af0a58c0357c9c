"""LP relaxations and branch and bound over binary variables."""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass

import highspy
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

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
    ModelArrays,
    relative_gap,
)
from .simplex import solve_lp_arrays

log = logging.getLogger(__name__)

INT_TOL = 1e-6
FEAS_TOL = 1e-6
# dense simplex is used up to this many (rows x columns) when backend="auto"
_AUTO_DENSE_LIMIT = 40_000
# UC-sized models need cutting planes to close a 0.1% gap in reasonable time
AUTO_BNB_BINARIES = 64


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# presolve


@dataclass
class Presolved:
    arrays: ModelArrays
    cols: np.ndarray  # original index of every kept column
    fixed: np.ndarray  # full-length vector holding fixed values
    n_full: int
    infeasible: bool = False

    def expand(self, x_red: np.ndarray) -> np.ndarray:
        x = self.fixed.copy()
        x[self.cols] = x_red
        return x


def presolve(arr: ModelArrays, max_passes: int = 20) -> Presolved:
    """Singleton-row bound tightening, binary rounding and fixed-column removal."""
    A = arr.A.tocsc()
    lb = arr.lb.copy()
    ub = arr.ub.copy()
    binary = arr.binary
    rhs = arr.rhs.copy()
    sense = arr.sense
    m, n = A.shape
    row_alive = np.ones(m, dtype=bool)
    infeasible = False
    Ar = arr.A.tocsr()
    for _ in range(max_passes):
        changed = False
        lb[binary] = np.ceil(lb[binary] - 1e-9)
        ub[binary] = np.floor(ub[binary] + 1e-9)
        if np.any(lb > ub + 1e-9):
            infeasible = True
            break
        free = ub - lb > 1e-12
        # nonzeros per live row among non-fixed columns
        counts = np.asarray((Ar[:, free] != 0).sum(axis=1)).ravel()
        fixed_val = np.where(free, 0.0, lb)
        rhs_eff = rhs - Ar @ fixed_val
        for i in np.flatnonzero(row_alive & (counts <= 1)):
            start, end = Ar.indptr[i], Ar.indptr[i + 1]
            idx = Ar.indices[start:end]
            val = Ar.data[start:end]
            sel = free[idx] & (val != 0)
            r = rhs_eff[i]
            if not np.any(sel):
                ok = (sense[i] == LE and 0 <= r + FEAS_TOL) or (sense[i] == GE and 0 >= r - FEAS_TOL) or (
                    sense[i] == EQ and abs(r) <= FEAS_TOL
                )
                if not ok:
                    infeasible = True
                row_alive[i] = False
                changed = True
                continue
            j = int(idx[sel][0])
            a = float(val[sel][0])
            bound = r / a
            lo_rule = (sense[i] == GE and a > 0) or (sense[i] == LE and a < 0) or sense[i] == EQ
            hi_rule = (sense[i] == LE and a > 0) or (sense[i] == GE and a < 0) or sense[i] == EQ
            if hi_rule and bound < ub[j]:
                ub[j] = bound
            if lo_rule and bound > lb[j]:
                lb[j] = bound
            row_alive[i] = False
            changed = True
        if infeasible or not changed:
            break
    if np.any(lb > ub + 1e-9):
        infeasible = True
    ub = np.maximum(ub, lb)
    free = ub - lb > 1e-12
    fixed = np.where(free, 0.0, lb)
    cols = np.flatnonzero(free)
    rows = np.flatnonzero(row_alive)
    rhs_eff = rhs - Ar @ fixed
    red = ModelArrays(
        c=arr.c[cols],
        A=Ar[rows][:, cols].tocsr(),
        sense=sense[rows],
        rhs=rhs_eff[rows],
        lb=lb[cols],
        ub=ub[cols],
        binary=binary[cols],
        constant=arr.constant + float(np.dot(arr.c, fixed)),
    )
    return Presolved(red, cols, fixed, n, infeasible)


# ---------------------------------------------------------------------------
# LP relaxation


class LpSolver:
    """Solves the relaxation of fixed row data under varying column bounds."""

    def __init__(self, arr: ModelArrays, backend: str = "auto"):
        self.arr = arr
        if backend == "auto":
            size = arr.A.shape[0] * max(arr.A.shape[1], 1)
            backend = "simplex" if size <= _AUTO_DENSE_LIMIT else "highs"
        if backend not in ("simplex", "highs"):
            raise ValueError(f"unknown LP backend {backend!r}")
        self.backend = backend
        if backend == "highs":
            A = arr.A
            le = arr.sense == LE
            ge = arr.sense == GE
            eq = arr.sense == EQ
            self.A_ub = sp.vstack([A[le], -A[ge]]).tocsr() if (le.any() or ge.any()) else None
            self.b_ub = np.concatenate([arr.rhs[le], -arr.rhs[ge]]) if self.A_ub is not None else None
            self.A_eq = A[eq].tocsr() if eq.any() else None
            self.b_eq = arr.rhs[eq] if eq.any() else None
        self.calls = 0

    def solve(self, lb: np.ndarray, ub: np.ndarray) -> LpResult:
        self.calls += 1
        arr = self.arr
        if np.any(lb > ub + 1e-9):
            return LpResult(INFEASIBLE)
        if arr.n == 0:
            return LpResult(OPTIMAL, x=np.zeros(0), objective=0.0)
        if self.backend == "simplex":
            res = solve_lp_arrays(arr.c, arr.A.toarray(), arr.sense, arr.rhs, lb, ub)
            return res
        res = linprog(
            arr.c,
            A_ub=self.A_ub,
            b_ub=self.b_ub,
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            bounds=np.column_stack([lb, ub]),
            method="highs-ds",
            options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
        )
        if res.status == 0:
            return LpResult(OPTIMAL, x=res.x, objective=float(res.fun), iterations=int(res.nit))
        if res.status == 2:
            return LpResult(INFEASIBLE)
        if res.status == 3:
            return LpResult(UNBOUNDED)
        raise SolverError(f"LP solver failed: {res.message}")


def solve_lp(model: MilpModel, backend: str = "auto") -> LpResult:
    """Solve the LP relaxation of ``model`` (integrality dropped)."""
    model.validate()
    arr = model.arrays()
    res = LpSolver(arr, backend).solve(arr.lb, arr.ub)
    if res.status == OPTIMAL:
        res.objective += arr.constant
    return res


# ---------------------------------------------------------------------------
# branch and bound


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    seq: int
    fixings: tuple = ()


def _most_fractional(x: np.ndarray, bin_idx: np.ndarray) -> int:
    """Binary column whose value is closest to 0.5; -1 if all integral."""
    if bin_idx.size == 0:
        return -1
    frac = np.abs(x[bin_idx] - np.round(x[bin_idx]))
    k = int(np.argmax(frac))  # first maximum, i.e. lowest index on ties
    if frac[k] <= INT_TOL:
        return -1
    return int(bin_idx[k])


def solve_milp(
    model: MilpModel,
    gap: float = 1e-3,
    time_limit_s: float = 600.0,
    lp_backend: str = "auto",
    backend: str = "auto",
    node_limit: int | None = None,
    start: dict | None = None,
) -> MilpSolution:
    """Minimise ``model`` to a relative gap.

    ``backend="bnb"`` runs the built-in branch and bound; ``"highs"`` hands the
    model to the HiGHS MILP solver, optionally seeded with ``start``, a
    {variable: value} map that HiGHS completes into a feasible point if it
    can. ``"auto"`` uses the built-in search for models with at most
    ``AUTO_BNB_BINARIES`` binaries.
    """
    if gap < 0:
        raise ValueError("gap must be non-negative")
    model.validate()
    if backend == "auto":
        backend = "bnb" if model.n_binaries <= AUTO_BNB_BINARIES else "highs"
    if backend == "highs":
        return _solve_highs(model, gap, time_limit_s, start)
    if backend != "bnb":
        raise ValueError(f"unknown backend {backend!r}")
    return _BranchAndBound(model, gap, time_limit_s, lp_backend, node_limit).run()


class _BranchAndBound:
    def __init__(self, model, gap, time_limit_s, lp_backend, node_limit):
        self.model = model
        self.gap = gap
        self.deadline = time.perf_counter() + time_limit_s
        self.t0 = time.perf_counter()
        self.node_limit = node_limit
        self.pre = presolve(model.arrays())
        self.arr = self.pre.arrays
        self.lp = LpSolver(self.arr, lp_backend)
        self.bin_idx = np.flatnonzero(self.arr.binary)
        self.incumbent: np.ndarray | None = None
        self.inc_obj = math.inf
        self.nodes = 0
        self.seq = 0

    # -- helpers --------------------------------------------------------

    def _bounds(self, fixings):
        lb = self.arr.lb.copy()
        ub = self.arr.ub.copy()
        for j, v in fixings:
            lb[j] = ub[j] = v
        return lb, ub

    def _lp(self, lb, ub) -> LpResult:
        self.nodes += 1
        return self.lp.solve(lb, ub)

    def _try_incumbent(self, x: np.ndarray) -> bool:
        """Polish an integral point (binaries snapped, continuous re-solved) and keep it if better."""
        lb = self.arr.lb.copy()
        ub = self.arr.ub.copy()
        xb = np.round(x[self.bin_idx])
        lb[self.bin_idx] = ub[self.bin_idx] = xb
        res = self.lp.solve(lb, ub)
        if res.status != OPTIMAL:
            return False
        if res.objective < self.inc_obj - 1e-12:
            self.incumbent = res.x
            self.inc_obj = res.objective
            log.debug("incumbent %.6f after %d nodes", self.inc_obj + self.arr.constant, self.nodes)
            return True
        return False

    def _prunable(self, bound: float) -> bool:
        if self.incumbent is None:
            return False
        obj = self.inc_obj + self.arr.constant
        return relative_gap(obj, bound + self.arr.constant) <= self.gap or bound >= self.inc_obj - 1e-9

    def _round_and_repair(self, x: np.ndarray, fixings=()) -> None:
        """Round binaries; on failure fix only near-integral ones and retry."""
        if self.bin_idx.size == 0:
            return
        if self._try_incumbent(x):
            return
        base_lb, base_ub = self._bounds(fixings)
        for _ in range(3):
            lb, ub = base_lb.copy(), base_ub.copy()
            xb = x[self.bin_idx]
            near = np.abs(xb - np.round(xb)) < 0.1
            lb[self.bin_idx[near]] = ub[self.bin_idx[near]] = np.round(xb[near])
            res = self.lp.solve(lb, ub)
            if res.status != OPTIMAL:
                return
            x = res.x
            if _most_fractional(x, self.bin_idx) < 0:
                self._try_incumbent(x)
                return
            if self._try_incumbent(x):
                return

    def _time_up(self) -> bool:
        if time.perf_counter() > self.deadline:
            return True
        return self.node_limit is not None and self.nodes >= self.node_limit

    def _children(self, node_fix, j, x_j, bound, depth):
        first = float(round(x_j))
        out = []
        for v in (first, 1.0 - first):
            self.seq += 1
            out.append(_Node(bound, -(depth + 1), self.seq, node_fix + ((j, v),)))
        return out

    # -- main loop ------------------------------------------------------

    def run(self) -> MilpSolution:
        model = self.model
        const = self.arr.constant
        if self.pre.infeasible:
            return self._finish(INFEASIBLE, -math.inf)
        root = self._lp(self.arr.lb, self.arr.ub)
        if root.status == INFEASIBLE:
            return self._finish(INFEASIBLE, math.inf)
        if root.status == UNBOUNDED:
            return self._finish(UNBOUNDED, -math.inf)
        if _most_fractional(root.x, self.bin_idx) < 0:
            self._try_incumbent(root.x)
            return self._finish(OPTIMAL, root.objective + const)
        self._round_and_repair(root.x)

        heap: list[_Node] = []
        # initial depth-first dive; siblings go to the best-first queue
        fix: tuple = ()
        x, bound, depth = root.x, root.objective, 0
        while not self._time_up():
            j = _most_fractional(x, self.bin_idx)
            if j < 0:
                self._try_incumbent(x)
                break
            down, up = self._children(fix, j, x[j], bound, depth)
            heapq.heappush(heap, up)
            fix, depth = down.fixings, depth + 1
            res = self._lp(*self._bounds(fix))
            if res.status != OPTIMAL or self._prunable(res.objective):
                break
            x, bound = res.x, res.objective

        timed_out = False
        while heap:
            best_bound = heap[0].bound
            if self.incumbent is not None and relative_gap(self.inc_obj + const, best_bound + const) <= self.gap:
                break
            if self._time_up():
                timed_out = True
                break
            node = heapq.heappop(heap)
            if self._prunable(node.bound):
                continue
            res = self._lp(*self._bounds(node.fixings))
            if res.status == INFEASIBLE or res.status != OPTIMAL:
                continue
            if self._prunable(res.objective):
                continue
            j = _most_fractional(res.x, self.bin_idx)
            if j < 0:
                self._try_incumbent(res.x)
                continue
            if self.nodes % 50 == 0:
                self._round_and_repair(res.x, node.fixings)
            for child in self._children(node.fixings, j, res.x[j], res.objective, -node.neg_depth):
                heapq.heappush(heap, child)

        open_bound = heap[0].bound if heap else math.inf
        if self.incumbent is None:
            if timed_out:
                return self._finish(UNKNOWN, open_bound + const)
            return self._finish(INFEASIBLE, math.inf)
        bound = min(open_bound, self.inc_obj) + const
        if timed_out:
            return self._finish(FEASIBLE, bound)
        return self._finish(OPTIMAL if not heap else GAP_REACHED, bound)

    def _finish(self, status: str, bound: float) -> MilpSolution:
        elapsed = time.perf_counter() - self.t0
        if self.incumbent is None:
            return MilpSolution(status, None, math.nan, bound, math.inf, self.nodes, elapsed)
        x = self.pre.expand(self.incumbent)
        b = self.model.arrays().binary
        x[b] = np.round(x[b])
        obj = self.model.objective_value(x)
        bound = min(bound, obj)
        gap = relative_gap(obj, bound)
        if status == OPTIMAL and gap > 1e-9:
            status = GAP_REACHED
        if status == GAP_REACHED and gap <= 1e-9:
            status = OPTIMAL
        viol = self.model.max_violation(x)
        if viol > FEAS_TOL:
            log.warning("solution violates constraints by %.3e", viol)
        return MilpSolution(status, x, obj, bound, gap, self.nodes, elapsed)


def _solve_highs(model: MilpModel, gap: float, time_limit_s: float, start=None) -> MilpSolution:
    t0 = time.perf_counter()
    arr = model.arrays()
    A = arr.A.tocsc()
    lp = highspy.HighsLp()
    lp.num_col_ = arr.n
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = arr.c
    lp.col_lower_ = arr.lb
    lp.col_upper_ = arr.ub
    lp.row_lower_ = np.where(arr.sense == LE, -highspy.kHighsInf, arr.rhs)
    lp.row_upper_ = np.where(arr.sense == GE, highspy.kHighsInf, arr.rhs)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr
    lp.a_matrix_.index_ = A.indices
    lp.a_matrix_.value_ = A.data
    kinds = highspy.HighsVarType
    lp.integrality_ = [kinds.kInteger if b else kinds.kContinuous for b in arr.binary]
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("mip_rel_gap", float(gap))
    h.setOptionValue("time_limit", float(max(time_limit_s, 0.0)))
    h.passModel(lp)
    if start:
        idx = np.array(sorted(start), dtype=np.int32)
        h.setSolution(len(idx), idx, np.array([start[i] for i in idx], dtype=float))
    h.run()
    elapsed = time.perf_counter() - t0
    ms = h.getModelStatus()
    info = h.getInfo()
    if ms == highspy.HighsModelStatus.kInfeasible:
        return MilpSolution(INFEASIBLE, None, math.nan, math.inf, math.inf, 0, elapsed)
    if info.primal_solution_status != 2:  # no feasible point
        return MilpSolution(UNKNOWN, None, math.nan, math.inf, math.inf, int(info.mip_node_count), elapsed)
    x = np.array(h.getSolution().col_value, dtype=float)
    x[arr.binary] = np.round(x[arr.binary])
    obj = model.objective_value(x)
    bound = float(info.mip_dual_bound)
    bound = obj if not math.isfinite(bound) else min(bound + arr.constant, obj)
    status = OPTIMAL if ms == highspy.HighsModelStatus.kOptimal else FEASIBLE
    return MilpSolution(status, x, obj, bound, relative_gap(obj, bound), int(info.mip_node_count), elapsed)
