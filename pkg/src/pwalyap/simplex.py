"""Dense two-phase revised simplex.

Dantzig pricing, switching to Bland's rule after a run of degenerate
pivots so the method cannot cycle.  The basis inverse is kept explicitly
and refactorised periodically.  Meant for small programs (hundreds of
rows); large Lyapunov programs go to HiGHS.
"""

from __future__ import annotations

import time

import numpy as np

from .lp import EQ, LE, LinearProgram, LpSolution, LpStatus

PIVOT_TOL = 1e-9
COST_TOL = 1e-10
REFACTOR_EVERY = 50
DEGENERATE_RUN = 20


class _Timeout(Exception):
    pass


def _standard_form(lp: LinearProgram):
    """Rewrite as ``min c.z`` s.t. ``M z = r``, ``z >= 0``, ``r >= 0``.

    Returns the data plus a function mapping ``z`` back to the original
    variables.
    """
    A = lp.matrix().toarray()
    m, n = A.shape
    b = np.asarray(lp.rhs, dtype=float)
    senses = np.asarray(lp.senses)
    finite = np.isfinite(lp.lower)
    shift = np.where(finite, lp.lower, 0.0)
    b = b - A @ shift

    free = np.flatnonzero(~finite)
    cols = [A, -A[:, free]]
    cost = [lp.objective, -lp.objective[free]]
    slack_rows = np.flatnonzero(senses != EQ)
    S = np.zeros((m, len(slack_rows)))
    for k, r in enumerate(slack_rows):
        S[r, k] = 1.0 if senses[r] == LE else -1.0
    cols.append(S)
    cost.append(np.zeros(len(slack_rows)))
    M = np.hstack(cols)
    c = np.concatenate(cost)
    flip = b < 0
    M[flip] *= -1
    b[flip] *= -1

    def recover(z):
        x = z[:n].copy()
        x[free] -= z[n:n + len(free)]
        return x + shift

    return M, b, c, recover


class _Tableau:
    def __init__(self, M, b, basis, deadline):
        self.M = M
        self.b = b
        self.basis = list(basis)
        self.deadline = deadline
        self.refactor()

    def refactor(self):
        self.Binv = np.linalg.inv(self.M[:, self.basis])
        self.since_refactor = 0

    def xB(self):
        return self.Binv @ self.b

    def run(self, c, allowed):
        """Minimise ``c.z`` over the current basis; returns 'optimal' or 'unbounded'."""
        bland = False
        degenerate = 0
        while True:
            if time.monotonic() > self.deadline:
                raise _Timeout
            xB = self.xB()
            y = c[self.basis] @ self.Binv
            d = c - y @ self.M
            d[self.basis] = 0.0
            d[~allowed] = 0.0
            candidates = np.flatnonzero(d < -COST_TOL)
            if len(candidates) == 0:
                return "optimal"
            j = int(candidates[0]) if bland else int(candidates[np.argmin(d[candidates])])
            u = self.Binv @ self.M[:, j]
            rows = np.flatnonzero(u > PIVOT_TOL)
            if len(rows) == 0:
                return "unbounded"
            ratios = xB[rows] / u[rows]
            theta = ratios.min()
            tied = rows[ratios <= theta + 1e-12]
            if bland:
                r = int(min(tied, key=lambda i: self.basis[i]))
            else:
                r = int(tied[np.argmax(u[tied])])
            if theta <= 1e-12:
                degenerate += 1
                bland = bland or degenerate >= DEGENERATE_RUN
            else:
                degenerate = 0
            self.pivot(r, j, u)

    def pivot(self, r, j, u=None):
        if u is None:
            u = self.Binv @ self.M[:, j]
        self.basis[r] = j
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()
            return
        E = self.Binv
        pivot_row = E[r] / u[r]
        E -= np.outer(u, pivot_row)
        E[r] = pivot_row


def solve_dense(lp: LinearProgram, time_budget: float) -> LpSolution:
    deadline = time.monotonic() + time_budget
    M, b, c, recover = _standard_form(lp)
    m, n = M.shape
    # phase 1 with one artificial per row
    Mp = np.hstack([M, np.eye(m)])
    cp = np.concatenate([np.zeros(n), np.ones(m)])
    tab = _Tableau(Mp, b, range(n, n + m), deadline)
    allowed = np.ones(n + m, dtype=bool)
    try:
        tab.run(cp, allowed)
        xB = tab.xB()
        infeas = float(sum(x for x, j in zip(xB, tab.basis) if j >= n))
        if infeas > 1e-7 * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpSolution(LpStatus.INFEASIBLE)
        # drive artificials out of the basis; drop rows that are redundant
        keep_rows = list(range(m))
        for r in range(m):
            if tab.basis[r] < n:
                continue
            row = tab.Binv[r] @ M
            nonbasic = [j for j in np.flatnonzero(np.abs(row) > PIVOT_TOL) if j not in tab.basis]
            if nonbasic:
                tab.pivot(r, int(nonbasic[0]))
            else:
                keep_rows.remove(r)
        basis = [tab.basis[r] for r in keep_rows]
        tab2 = _Tableau(M[keep_rows], b[keep_rows], basis, deadline)
        outcome = tab2.run(c, np.ones(n, dtype=bool))
    except _Timeout:
        return LpSolution(LpStatus.TIMED_OUT)
    if outcome == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED)
    z = np.zeros(n)
    z[tab2.basis] = tab2.xB()
    z = np.maximum(z, 0.0)
    x = recover(z)
    return LpSolution(LpStatus.OPTIMAL, x, float(lp.objective @ x))
