"""Dense bounded-variable primal simplex (two phases).

Suitable for the small and medium LPs in the test-suite and for branch and
bound on small models. Rows and columns are equilibrated to unit max
magnitude first. Dantzig pricing is used until a run of degenerate pivots
is seen, after which Bland's rule takes over for the rest of the solve.
"""

from __future__ import annotations

import math

import numpy as np

from .model import EQ, GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, LpResult

_PIV_TOL = 1e-9
_OPT_TOL = 1e-9
_FEAS_TOL = 1e-7
_DEGENERATE_SWITCH = 50


class _Tableau:
    def __init__(self, T, xb, basis, upper, at_upper):
        self.T = T  # m x N, columns already multiplied by B^-1
        self.xb = xb  # values of basic variables
        self.basis = basis  # column index of the basic variable in each row
        self.upper = upper  # upper bound of every column (lower is 0)
        self.at_upper = at_upper  # nonbasic status
        self.is_basic = np.zeros(T.shape[1], dtype=bool)
        self.is_basic[basis] = True

    def values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.upper, 0.0)
        x[self.basis] = self.xb
        return x

    def pivot(self, r: int, j: int):
        T = self.T
        piv = T[r, j]
        T[r] /= piv
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.is_basic[self.basis[r]] = False
        self.basis[r] = j
        self.is_basic[j] = True

    def run(self, cost: np.ndarray, max_iter: int) -> tuple[str, int]:
        bland = False
        degenerate = 0
        for it in range(max_iter):
            d = cost - cost[self.basis] @ self.T
            # a nonbasic column improves if it can move in the descent direction
            score = np.where(self.at_upper, d, -d)
            movable = ~self.is_basic & (self.upper > 0)
            cand = np.flatnonzero(movable & (score > _OPT_TOL))
            if cand.size == 0:
                return OPTIMAL, it
            j = int(cand[0]) if bland else int(cand[np.argmax(score[cand])])
            sigma = -1.0 if self.at_upper[j] else 1.0
            alpha = sigma * self.T[:, j]
            theta = self.upper[j]
            leave, leave_up = -1, False
            pos = alpha > _PIV_TOL
            neg = alpha < -_PIV_TOL
            with np.errstate(divide="ignore", invalid="ignore"):
                r_low = np.where(pos, np.maximum(self.xb, 0.0) / alpha, np.inf)
                ub_b = self.upper[self.basis]
                r_up = np.where(neg & np.isfinite(ub_b), np.maximum(ub_b - self.xb, 0.0) / -alpha, np.inf)
            ratios = np.minimum(r_low, r_up)
            if ratios.size:
                best = float(ratios.min())
                if best < theta:
                    ties = np.flatnonzero(ratios <= best + 1e-12)
                    if bland:
                        r = int(min(ties, key=lambda i: self.basis[i]))
                    else:
                        r = int(ties[np.argmax(np.abs(alpha[ties]))])
                    theta = best
                    leave = r
                    leave_up = r_up[r] <= r_low[r]
            if math.isinf(theta):
                return UNBOUNDED, it
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            if degenerate >= _DEGENERATE_SWITCH:
                bland = True
            self.xb = self.xb - theta * alpha
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
                continue
            out = self.basis[leave]
            entering_value = (self.upper[j] if self.at_upper[j] else 0.0) + sigma * theta
            self.pivot(leave, j)
            self.xb[leave] = entering_value
            self.at_upper[out] = leave_up
            self.at_upper[j] = False
        raise RuntimeError("simplex iteration limit reached")


def solve_lp_arrays(c, A, sense, rhs, lb, ub, max_iter: int = 50_000) -> LpResult:
    """Minimise ``c x`` subject to ``A x (sense) rhs`` and ``lb <= x <= ub``."""
    c = np.asarray(c, dtype=float)
    c_orig = c
    A = np.asarray(A.todense() if hasattr(A, "todense") else A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(0, c.size)
    rhs = np.asarray(rhs, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape
    if np.any(lb > ub + 1e-12):
        return LpResult(INFEASIBLE)

    # equilibrate rows, then columns
    rs = np.max(np.abs(A), axis=1) if n else np.ones(m)
    rs = np.where(rs > 0, 1.0 / np.where(rs > 0, rs, 1.0), 1.0)
    A = A * rs[:, None]
    rhs = rhs * rs
    cs = np.max(np.abs(A), axis=0) if m else np.ones(n)
    cs = np.where(cs > 0, 1.0 / np.where(cs > 0, cs, 1.0), 1.0)
    A = A * cs[None, :]
    c = c * cs
    lb = lb / cs
    ub = ub / cs

    # shift to y >= 0: x = lb + y, x = ub - y, or x = y1 - y2
    cols, costs, ups, offset = [], [], [], np.zeros(n)
    back = []  # (orig var, column, sign)
    for j in range(n):
        if math.isfinite(lb[j]):
            offset[j] = lb[j]
            back.append((j, len(cols), 1.0))
            cols.append(A[:, j])
            costs.append(c[j])
            ups.append(ub[j] - lb[j])
        elif math.isfinite(ub[j]):
            offset[j] = ub[j]
            back.append((j, len(cols), -1.0))
            cols.append(-A[:, j])
            costs.append(-c[j])
            ups.append(math.inf)
        else:
            back.append((j, len(cols), 1.0))
            cols.append(A[:, j])
            costs.append(c[j])
            ups.append(math.inf)
            back.append((j, len(cols), -1.0))
            cols.append(-A[:, j])
            costs.append(-c[j])
            ups.append(math.inf)
    b = rhs - A @ offset
    for i, s in enumerate(sense):
        if s == EQ:
            continue
        col = np.zeros(m)
        col[i] = 1.0 if s == LE else -1.0
        cols.append(col)
        costs.append(0.0)
        ups.append(math.inf)
    ns = len(cols)
    M = np.column_stack(cols) if cols else np.zeros((m, 0))
    costs = np.array(costs)
    ups = np.array(ups)
    flip = b < 0
    M[flip] *= -1
    b = np.where(flip, -b, b)

    # phase 1 with one artificial per row
    T = np.hstack([M, np.eye(m)])
    upper = np.concatenate([ups, np.full(m, math.inf)])
    tab = _Tableau(T, b.copy(), np.arange(ns, ns + m), upper, np.zeros(ns + m, dtype=bool))
    phase1 = np.concatenate([np.zeros(ns), np.ones(m)])
    _, it1 = tab.run(phase1, max_iter)
    infeas = float(tab.xb[tab.basis >= ns].sum()) if m else 0.0
    if infeas > _FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
        return LpResult(INFEASIBLE, iterations=it1)

    # drive artificials out of the basis where possible, then lock them at 0
    for r in range(m):
        if tab.basis[r] >= ns:
            row = np.abs(tab.T[r, :ns])
            row[tab.is_basic[:ns]] = 0.0
            k = int(np.argmax(row)) if ns else 0
            if ns and row[k] > 1e-7:
                tab.pivot(r, k)
                tab.at_upper[k] = False
                tab.xb = _recompute_xb(tab, M, b)
    tab.upper[ns:] = 0.0
    tab.at_upper[ns:] = False

    phase2 = np.concatenate([costs, np.zeros(m)])
    status, it2 = tab.run(phase2, max_iter)
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, iterations=it1 + it2)
    y = tab.values()[:ns]
    x = offset.copy()
    for j, col, sign in back:
        x[j] += sign * y[col]
    x = x * cs
    return LpResult(OPTIMAL, x=x, objective=float(np.dot(c_orig, x)), iterations=it1 + it2)


def _recompute_xb(tab: _Tableau, M, b):
    """Basic values from scratch: B x_B = b - N x_N."""
    m = M.shape[0]
    full = np.hstack([M, np.eye(m)])
    xn = np.where(tab.at_upper, tab.upper, 0.0)
    xn[tab.basis] = 0.0
    B = full[:, tab.basis]
    return np.linalg.solve(B, b - full @ xn)
