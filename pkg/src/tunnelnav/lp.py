"""Dense bounded-variable primal simplex.

min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lower <= x <= upper.

Two phases with artificial variables; Dantzig pricing with a permanent switch
to Bland's rule after a degeneracy stall, which guarantees termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2

REFACTOR_EVERY = 64
STALL_SWITCH = 40


@dataclass
class LpResult:
    status: str          # "optimal" | "infeasible" | "unbounded" | "stall"
    x: np.ndarray | None
    objective: float
    iterations: int


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None,
             lower=None, upper=None, tol: float = 1e-9,
             max_iter: int | None = None) -> LpResult:
    """Solve the LP; returns structural-variable values only."""
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float).copy()
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float).copy()
    if np.any(lower > upper + tol):
        return LpResult("infeasible", None, np.inf, 0)

    m_eq, m_ub = len(b_eq), len(b_ub)
    m = m_eq + m_ub
    n_slack = m_ub
    n_total = n + n_slack + m  # structural + slack + artificial

    A = np.zeros((m, n_total))
    A[:m_eq, :n] = A_eq
    A[m_eq:, :n] = A_ub
    A[m_eq:, n:n + n_slack] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])

    lo = np.concatenate([lower, np.zeros(n_slack), np.zeros(m)])
    hi = np.concatenate([upper, np.full(n_slack, np.inf), np.full(m, np.inf)])

    # nonbasic start at a finite bound
    x = np.zeros(n_total)
    status = np.full(n_total, AT_LOWER, dtype=int)
    for j in range(n + n_slack):
        if np.isfinite(lo[j]):
            x[j] = lo[j]
        elif np.isfinite(hi[j]):
            x[j] = hi[j]
            status[j] = AT_UPPER
        else:
            raise ValueError("free variables are not supported")

    r = b - A[:, :n + n_slack] @ x[:n + n_slack]
    art = np.arange(n + n_slack, n_total)
    sgn = np.where(r >= 0.0, 1.0, -1.0)
    A[:, art] = np.diag(sgn)
    x[art] = np.abs(r)
    status[art] = BASIC
    basis = art.copy()
    b_inv = np.diag(sgn)  # inverse of the artificial basis

    if max_iter is None:
        max_iter = 200 * (m + n_total) + 1000

    phase1_cost = np.zeros(n_total)
    phase1_cost[art] = 1.0
    it1, stat1 = _iterate(A, b, lo, hi, x, basis, status, b_inv,
                          phase1_cost, tol, max_iter)
    if stat1 == "stall":
        return LpResult("stall", None, np.inf, it1)
    if float(phase1_cost @ x) > 1e-7:
        return LpResult("infeasible", None, np.inf, it1)
    # pin artificials to zero for phase 2
    lo[art] = 0.0
    hi[art] = 0.0
    x[art] = np.where(np.abs(x[art]) < 1e-9, 0.0, x[art])

    cost = np.zeros(n_total)
    cost[:n] = c
    it2, stat2 = _iterate(A, b, lo, hi, x, basis, status, b_inv,
                          cost, tol, max_iter)
    iterations = it1 + it2
    if stat2 != "optimal":
        return LpResult(stat2, None, np.inf if stat2 != "unbounded" else -np.inf,
                        iterations)
    return LpResult("optimal", x[:n].copy(), float(c @ x[:n]), iterations)


def _iterate(A, b, lo, hi, x, basis, status, b_inv, cost, tol, max_iter):
    m, n_total = A.shape
    stall = 0
    bland = False
    last_obj = np.inf
    for it in range(max_iter):
        if it > 0 and it % REFACTOR_EVERY == 0:
            try:
                b_inv[:, :] = np.linalg.inv(A[:, basis])
            except np.linalg.LinAlgError:
                return it, "stall"
            x[basis] = b_inv @ (b - A @ x + A[:, basis] @ x[basis])

        y = cost[basis] @ b_inv
        d = cost - y @ A
        can_inc = (status == AT_LOWER) & (d < -tol)
        can_dec = (status == AT_UPPER) & (d > tol)
        candidates = np.flatnonzero(can_inc | can_dec)
        if candidates.size == 0:
            return it, "optimal"

        obj = float(cost @ x)
        if obj > last_obj - 1e-12:
            stall += 1
            if stall > STALL_SWITCH:
                bland = True
        else:
            stall = 0
        last_obj = obj

        if bland:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmax(np.abs(d[candidates]))])
        sigma = 1.0 if status[j] == AT_LOWER else -1.0

        w = b_inv @ A[:, j]
        sw = sigma * w
        # ratio test over basic variables plus the entering bound flip
        flip_cap = hi[j] - lo[j] if np.isfinite(hi[j]) and np.isfinite(lo[j]) \
            else np.inf
        t_cand = np.full(m, np.inf)
        pos = sw > tol
        if pos.any():
            t_cand[pos] = (x[basis[pos]] - lo[basis[pos]]) / sw[pos]
        neg = sw < -tol
        if neg.any():
            room = hi[basis[neg]] - x[basis[neg]]
            t_cand[neg] = np.where(np.isfinite(room), room / (-sw[neg]), np.inf)
        t_rows = t_cand.min() if m else np.inf
        leave = -1
        if t_rows <= flip_cap + 1e-12 and np.isfinite(t_rows):
            ties = np.flatnonzero(t_cand <= t_rows + 1e-12)
            if bland:
                leave = int(ties[np.argmin(basis[ties])])
            else:
                leave = int(ties[0])
            t_best = t_rows
        else:
            t_best = flip_cap
        if not np.isfinite(t_best):
            return it, "unbounded"
        t_best = max(t_best, 0.0)

        x[j] += sigma * t_best
        x[basis] -= t_best * sw
        if leave < 0:
            # bound flip: entering variable moves to its opposite bound
            status[j] = AT_UPPER if status[j] == AT_LOWER else AT_LOWER
            continue
        lv = basis[leave]
        status[lv] = AT_LOWER if sw[leave] > 0 else AT_UPPER
        x[lv] = lo[lv] if sw[leave] > 0 else hi[lv]
        basis[leave] = j
        status[j] = BASIC
        # product-form update of the basis inverse
        piv = w[leave]
        if abs(piv) < 1e-12:
            try:
                b_inv[:, :] = np.linalg.inv(A[:, basis])
            except np.linalg.LinAlgError:
                return it, "stall"
        else:
            row = b_inv[leave] / piv
            b_inv -= np.outer(w, row)
            b_inv[leave] = row
    return max_iter, "stall"
