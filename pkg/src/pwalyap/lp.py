"""Slack-relaxed linear program for piecewise-affine Lyapunov functions.

For every cell ``i`` the program carries ``p_i`` (n free variables), ``q_i``
(free, only for cells without the origin as a vertex) and a slack
``tau_i >= 0``.  It minimises the total slack subject to

* decrease at every non-origin vertex:  ``p_i . (A_i v + a_i) - tau_i <= -eps1``
  (``a_i`` dropped for cells having the origin as a vertex),
* positivity at every non-origin vertex: ``p_i . v + q_i >= eps2``,
* continuity at every vertex shared by several cells: ``V_i(v) = V_j(v)``.

Setting every ``p_i = 0`` and ``q_i = eps2`` (or ``p_i`` along ``v`` for
origin cells) with large enough slack is always feasible, so the program
never reports infeasibility for a well-formed partition.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import InvalidPartition, MalformedProgram, NotOptimal
from .model import LyapunovCandidate, Partition, validate_partition

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9

LE, EQ, GE = -1, 0, 1
BACKENDS = ("highs", "highs-ds", "highs-ipm", "simplex")
_SENSE_TEXT = {LE: "<=", EQ: "=", GE: ">="}


@dataclass
class SearchConfig:
    eps1: float = 1e-4
    eps2: float = 1e-4
    zero_tolerance: float = 1e-8
    timeout_seconds: float = 3600.0
    backend: str = "highs"

    def __post_init__(self):
        for name in ("eps1", "eps2", "zero_tolerance", "timeout_seconds"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError("%s must be positive, got %r" % (name, value))
        if self.backend not in BACKENDS:
            raise ValueError("unknown LP backend %r (choose from %s)"
                             % (self.backend, ", ".join(BACKENDS)))


class LinearProgram:
    """Solver-agnostic LP: ``min c.x`` s.t. sparse rows with senses, lower bounds.

    Rows are accumulated with :meth:`add_row`; :meth:`matrix` returns the
    CSR form.  Variables without a lower bound are free; upper bounds are
    always infinite.
    """

    def __init__(self, num_vars: int, names: list[str] | None = None):
        self.num_vars = int(num_vars)
        self.objective = np.zeros(self.num_vars)
        self.lower = np.full(self.num_vars, -np.inf)
        self.names = names
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self.senses: list[int] = []
        self.rhs: list[float] = []
        self._csr = None

    @property
    def num_constraints(self) -> int:
        return len(self.rhs)

    def add_row(self, cols, vals, sense: int, rhs: float) -> int:
        cols = np.asarray(cols, dtype=int).reshape(-1)
        vals = np.asarray(vals, dtype=float).reshape(-1)
        if cols.shape != vals.shape:
            raise MalformedProgram("coefficient and index arrays differ in length")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.num_vars):
            raise MalformedProgram("row references an undeclared variable")
        if sense not in _SENSE_TEXT:
            raise MalformedProgram("unknown relation %r" % sense)
        if not (np.all(np.isfinite(vals)) and np.isfinite(rhs)):
            raise MalformedProgram("non-finite coefficient")
        r = len(self.rhs)
        self._rows.extend([r] * len(cols))
        self._cols.extend(cols.tolist())
        self._vals.extend(vals.tolist())
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self._csr = None
        return r

    def set_objective(self, cols, vals):
        cols = np.asarray(cols, dtype=int)
        if len(cols) and (cols.min() < 0 or cols.max() >= self.num_vars):
            raise MalformedProgram("objective references an undeclared variable")
        self.objective[:] = 0.0
        np.add.at(self.objective, cols, vals)

    def matrix(self) -> sp.csr_matrix:
        if self._csr is None:
            self._csr = sp.csr_matrix((self._vals, (self._rows, self._cols)),
                                      shape=(self.num_constraints, self.num_vars))
            self._csr.eliminate_zeros()
        return self._csr

    def residuals(self, x) -> np.ndarray:
        """Constraint violation per row (0 when satisfied)."""
        Ax = self.matrix() @ np.asarray(x, dtype=float)
        b = np.asarray(self.rhs)
        s = np.asarray(self.senses)
        viol = np.where(s == LE, Ax - b, np.where(s == GE, b - Ax, np.abs(Ax - b)))
        return np.maximum(viol, 0.0)

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        row = float(self.residuals(x).max(initial=0.0))
        bound = float(np.max(np.where(np.isfinite(self.lower), self.lower - x, 0.0), initial=0.0))
        return max(row, bound)

    def to_lp_format(self) -> str:
        """CPLEX LP text, readable by HiGHS, GLPK, CBC, Gurobi and others."""
        names = self.names or ["x%d" % j for j in range(self.num_vars)]

        def expr(cols, vals):
            terms = ["%s %s %s" % ("-" if v < 0 else "+", repr(abs(float(v))), names[c])
                     for c, v in zip(cols, vals) if v != 0.0]
            return " ".join(terms) if terms else "0 " + names[0]

        obj = np.flatnonzero(self.objective)
        lines = ["Minimize", " obj: " + expr(obj, self.objective[obj]), "Subject To"]
        A = self.matrix()
        for r in range(self.num_constraints):
            row = A.getrow(r)
            lines.append(" c%d: %s %s %s" % (r, expr(row.indices, row.data),
                                             _SENSE_TEXT[self.senses[r]], repr(self.rhs[r])))
        lines.append("Bounds")
        for j in range(self.num_vars):
            if np.isfinite(self.lower[j]):
                lines.append(" %s >= %s" % (names[j], repr(float(self.lower[j]))))
            else:
                lines.append(" %s free" % names[j])
        lines.append("End")
        return "\n".join(lines) + "\n"


class LpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    TIMED_OUT = "TimedOut"


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float | None = None
    seconds: float = 0.0
    max_violation: float | None = None


# Above this many variables the interior point method (with crossover) has
# been roughly twice as fast as dual simplex on Lyapunov programs.
IPM_THRESHOLD = 5000


def _solve_highs(lp: LinearProgram, time_budget: float, method: str = "highs") -> LpSolution:
    A = lp.matrix()
    senses = np.asarray(lp.senses)
    b = np.asarray(lp.rhs)
    ub_rows = np.flatnonzero(senses != EQ)
    eq_rows = np.flatnonzero(senses == EQ)
    sign = np.where(senses[ub_rows] == GE, -1.0, 1.0)
    A_ub = sp.diags(sign) @ A[ub_rows] if len(ub_rows) else None
    b_ub = sign * b[ub_rows] if len(ub_rows) else None
    A_eq = A[eq_rows] if len(eq_rows) else None
    b_eq = b[eq_rows] if len(eq_rows) else None
    bounds = np.column_stack([np.where(np.isfinite(lp.lower), lp.lower, -np.inf),
                              np.full(lp.num_vars, np.inf)])
    start = time.perf_counter()
    res = None
    # Presolve occasionally fails in postsolve at tight tolerances; fall back
    # to no presolve, then to the other HiGHS algorithm.
    if method == "highs":
        method = "highs-ipm" if lp.num_vars > IPM_THRESHOLD else "highs-ds"
    other = "highs-ipm" if method == "highs-ds" else "highs-ds"
    for method, presolve in ((method, True), (method, False), (other, False)):
        left = time_budget - (time.perf_counter() - start)
        if left <= 0:
            return LpSolution(LpStatus.TIMED_OUT)
        options = {
            "time_limit": max(float(left), 1e-3),
            "primal_feasibility_tolerance": FEASIBILITY_TOL,
            "dual_feasibility_tolerance": FEASIBILITY_TOL,
            "presolve": presolve,
        }
        res = linprog(lp.objective, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=bounds, method=method, options=options)
        status = {0: LpStatus.OPTIMAL, 1: LpStatus.TIMED_OUT, 2: LpStatus.INFEASIBLE,
                  3: LpStatus.UNBOUNDED}.get(res.status)
        if status is not None:
            break
        logger.warning("HiGHS (%s, presolve=%s) gave no usable status: %s",
                       method, presolve, res.message)
    else:
        if time.perf_counter() - start >= time_budget:
            return LpSolution(LpStatus.TIMED_OUT)
        raise MalformedProgram("HiGHS failed: %s" % res.message)
    if status is LpStatus.OPTIMAL:
        return LpSolution(status, np.asarray(res.x), float(res.fun))
    return LpSolution(status)


def solve_lp(lp: LinearProgram, time_budget: float = 3600.0, backend: str = "highs") -> LpSolution:
    """Solve ``lp`` within ``time_budget`` seconds.

    ``backend`` is ``"highs"`` (default; picks dual simplex or interior
    point by size), ``"highs-ds"``, ``"highs-ipm"``, or ``"simplex"`` for the
    bundled dense revised simplex, which is only practical for small programs.
    """
    if lp.num_vars <= 0:
        raise MalformedProgram("program has no variables")
    start = time.perf_counter()
    if time_budget <= 0:
        return LpSolution(LpStatus.TIMED_OUT, seconds=0.0)
    if backend in ("highs", "highs-ds", "highs-ipm"):
        sol = _solve_highs(lp, time_budget, backend)
    elif backend == "simplex":
        from .simplex import solve_dense
        sol = solve_dense(lp, time_budget)
    else:
        raise ValueError("unknown LP backend %r" % backend)
    sol.seconds = time.perf_counter() - start
    if sol.status is LpStatus.OPTIMAL:
        sol.max_violation = lp.max_violation(sol.x)
    return sol


@dataclass
class IndexMap:
    """Variable layout of a Lyapunov LP."""

    cell_ids: list[int]
    dim: int
    p_start: np.ndarray
    q_index: np.ndarray  # -1 for cells whose V has no constant term
    tau_index: np.ndarray
    position: dict[int, int] = field(init=False)

    def __post_init__(self):
        self.position = {cid: k for k, cid in enumerate(self.cell_ids)}


def build_lp(partition: Partition, config: SearchConfig | None = None,
             check: bool = True) -> tuple[LinearProgram, IndexMap]:
    """Assemble the slack-relaxed Lyapunov LP for ``partition``."""
    config = config or SearchConfig()
    if not partition.cells:
        raise InvalidPartition("partition has no cells")
    if check:
        violations = validate_partition(partition)
        if violations:
            raise InvalidPartition("partition is not well-formed: %s" % (violations[0],), violations)

    n = partition.dim
    V = partition.vertices.array
    origin = partition.origin_id
    cells = partition.cells
    p_start = np.zeros(len(cells), dtype=int)
    q_index = np.full(len(cells), -1, dtype=int)
    tau_index = np.zeros(len(cells), dtype=int)
    names = []
    j = 0
    for k, c in enumerate(cells):
        p_start[k] = j
        names.extend("p%d_%d" % (c.id, t) for t in range(n))
        j += n
        if not c.contains_origin:
            q_index[k] = j
            names.append("q%d" % c.id)
            j += 1
        tau_index[k] = j
        names.append("tau%d" % c.id)
        j += 1
    lp = LinearProgram(j, names)
    lp.lower[tau_index] = 0.0
    lp.set_objective(tau_index, np.ones(len(cells)))
    index = IndexMap([c.id for c in cells], n, p_start, q_index, tau_index)

    p_cols = np.arange(n)
    for k, c in enumerate(cells):
        pc = p_start[k] + p_cols
        offset = c.law.a if not c.contains_origin else np.zeros(n)
        if c.contains_origin and np.linalg.norm(c.law.a) > 1e-8:
            logger.warning("cell %d has the origin as a vertex but affine term %s "
                           "(|a|=%.3g); the decrease rows ignore it",
                           c.id, c.law.a, np.linalg.norm(c.law.a))
        for v in c.vertex_ids:
            if v == origin:
                continue
            x = V[v]
            f = c.law.A @ x + offset
            lp.add_row(np.append(pc, tau_index[k]), np.append(f, -1.0), LE, -config.eps1)
            if q_index[k] >= 0:
                lp.add_row(np.append(pc, q_index[k]), np.append(x, 1.0), GE, config.eps2)
            else:
                lp.add_row(pc, x, GE, config.eps2)

    for v, owners in partition.vertex_cells().items():
        if len(owners) < 2 or v == origin:
            continue
        x = V[v]
        k0 = index.position[owners[0]]
        for cid in owners[1:]:
            k = index.position[cid]
            cols = list(p_start[k0] + p_cols) + list(p_start[k] + p_cols)
            vals = list(x) + list(-x)
            if q_index[k0] >= 0:
                cols.append(q_index[k0])
                vals.append(1.0)
            if q_index[k] >= 0:
                cols.append(q_index[k])
                vals.append(-1.0)
            lp.add_row(cols, vals, EQ, 0.0)
    return lp, index


def extract_candidate(solution: LpSolution, index: IndexMap) -> LyapunovCandidate:
    if solution.status is not LpStatus.OPTIMAL:
        raise NotOptimal("cannot extract a candidate from a %s solution" % solution.status.value)
    x = solution.x
    n = index.dim
    P = np.array([x[s:s + n] for s in index.p_start])
    q = np.where(index.q_index >= 0, x[np.maximum(index.q_index, 0)], 0.0)
    tau = np.maximum(x[index.tau_index], 0.0)
    return LyapunovCandidate(list(index.cell_ids), P, q, tau)


def slack_cells(candidate: LyapunovCandidate, zero_tolerance: float = 1e-8) -> set[int]:
    """Ids of the cells whose slack exceeds ``zero_tolerance``."""
    return {cid for cid, t in zip(candidate.cell_ids, candidate.tau) if t > zero_tolerance}
