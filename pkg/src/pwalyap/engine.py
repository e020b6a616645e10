"""Outer search loop: solve, inspect slacks, refine, repeat."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import CertificateViolation, EmptyRecords
from .lp import LpStatus, SearchConfig, build_lp, extract_candidate, slack_cells, solve_lp
from .model import LyapunovCandidate, Partition, eval_dynamics, require_valid
from .refinement import Strategy, apply_plan, propose

logger = logging.getLogger(__name__)
record_logger = logging.getLogger("pwalyap.records")


@dataclass
class IterationRecord:
    iteration: int
    cells: int
    slack_sum: float
    t_opt: float
    strategy: str
    vertices_added: int
    slack_cells: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class AnalysisResult:
    status: str  # "Valid" or "TimedOut"
    candidate: LyapunovCandidate | None
    partition: Partition
    records: list[IterationRecord] = field(default_factory=list)
    strategy: str = ""
    seconds: float = 0.0

    @property
    def valid(self) -> bool:
        return self.status == "Valid"


def analyze(partition: Partition, strategy, config: SearchConfig | None = None,
            on_record: Callable[[IterationRecord], None] | None = None,
            max_iterations: int | None = None, check_partition: bool = True) -> AnalysisResult:
    """Search for a piecewise-affine Lyapunov function, refining until valid or out of time.

    The timeout is checked between iterations; each LP solve also receives
    the remaining budget.  A valid result has already passed
    :func:`verify_certificate`.
    """
    config = config or SearchConfig()
    strategy = Strategy.parse(strategy)
    if check_partition:
        require_valid(partition)
    start = time.monotonic()
    records: list[IterationRecord] = []
    candidate = None
    added = 0
    iteration = 0
    while True:
        remaining = config.timeout_seconds - (time.monotonic() - start)
        if remaining <= 0 or (max_iterations is not None and iteration >= max_iterations):
            break
        lp, index = build_lp(partition, config, check=False)
        solution = solve_lp(lp, remaining, backend=config.backend)
        if solution.status is LpStatus.TIMED_OUT:
            break
        if solution.status is not LpStatus.OPTIMAL:
            raise RuntimeError("Lyapunov LP returned %s" % solution.status.value)
        candidate = extract_candidate(solution, index)
        I_s = slack_cells(candidate, config.zero_tolerance)
        record = IterationRecord(iteration, len(partition), candidate.slack_sum(),
                                 solution.seconds, strategy.value, added, len(I_s))
        records.append(record)
        record_logger.info(record.to_json())
        if on_record:
            on_record(record)
        if not I_s:
            verify_certificate(partition, candidate, config)
            return AnalysisResult("Valid", candidate, partition, records, strategy.value,
                                  time.monotonic() - start)
        if time.monotonic() - start >= config.timeout_seconds:
            break
        plan = propose(strategy, partition, candidate, config.zero_tolerance)
        partition = apply_plan(partition, plan)
        added = len(plan.buffer)
        iteration += 1
    return AnalysisResult("TimedOut", candidate, partition, records, strategy.value,
                          time.monotonic() - start)


def compare(partition: Partition, config: SearchConfig | None = None,
            strategies=tuple(Strategy)) -> dict[str, AnalysisResult]:
    """Run each strategy on its own copy of ``partition``."""
    return {Strategy.parse(s).value: analyze(partition.copy(), s, config) for s in strategies}


def metrics(records: list[IterationRecord]) -> list[tuple[float, float]]:
    """Normalised accumulated LP time and normalised cell count per iteration."""
    if not records:
        raise EmptyRecords("no iteration records")
    t = np.array([r.t_opt for r in records], dtype=float)
    n = np.array([r.cells for r in records], dtype=float)
    if t.sum() <= 0 or n.sum() <= 0:
        raise EmptyRecords("total optimisation time or cell count is zero")
    T = np.cumsum(t) / t.sum()
    T[-1] = 1.0
    return list(zip(T.tolist(), (n / n.sum()).tolist()))


@dataclass
class CertificateReport:
    vertex_checks: int
    sample_checks: int
    min_positivity: float
    max_decrease: float
    max_continuity_gap: float
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_certificate(partition: Partition, candidate: LyapunovCandidate,
                      config: SearchConfig | None = None, samples: int = 1000,
                      seed: int = 0) -> CertificateReport:
    """Recheck positivity, decrease and continuity without the LP solver.

    Vertex conditions use the LP margins loosened by ``zero_tolerance``;
    random interior samples only need ``V > 0`` and ``dV/dt < 0``.
    """
    config = config or SearchConfig()
    tol = config.zero_tolerance
    V = partition.vertices.array
    origin = partition.origin_id
    violations = []
    min_pos, max_dec, max_gap = np.inf, -np.inf, 0.0
    checks = 0
    for c in partition.cells:
        p, q, _ = candidate.piece(c.id)
        for v in c.vertex_ids:
            if v == origin:
                continue
            x = V[v]
            pos = float(p @ x + q)
            f = c.law.A @ x + (0.0 if c.contains_origin else c.law.a)
            dec = float(p @ f)
            checks += 1
            min_pos, max_dec = min(min_pos, pos), max(max_dec, dec)
            if pos < config.eps2 - tol:
                violations.append("positivity: cell %d vertex %d V=%.6g < eps2" % (c.id, v, pos))
            if dec > -config.eps1 + tol:
                violations.append("decrease: cell %d vertex %d dV/dt=%.6g > -eps1" % (c.id, v, dec))
    for v, owners in partition.vertex_cells().items():
        if len(owners) < 2:
            continue
        values = [candidate.value(cid, V[v]) for cid in owners]
        gap = max(values) - min(values)
        max_gap = max(max_gap, gap)
        if gap > tol:
            violations.append("continuity: vertex %d cells %s values differ by %.3g"
                              % (v, owners, gap))

    rng = np.random.default_rng(seed)
    picks = rng.integers(len(partition.cells), size=samples)
    for k in picks:
        c = partition.cells[k]
        P = partition.points(c)
        x = rng.dirichlet(np.ones(len(P))) @ P
        if np.linalg.norm(x) <= 1e-12:
            continue
        p, q, _ = candidate.piece(c.id)
        if not (p @ x + q > 0 and p @ eval_dynamics(c, x) < 0):
            violations.append("sample: cell %d point %s fails V>0 or dV/dt<0" % (c.id, x.tolist()))
    return CertificateReport(checks, samples, float(min_pos), float(max_dec), float(max_gap),
                             violations)


def verify_certificate(partition: Partition, candidate: LyapunovCandidate,
                       config: SearchConfig | None = None, samples: int = 1000,
                       seed: int = 0) -> CertificateReport:
    """Like :func:`check_certificate` but raises :class:`CertificateViolation`."""
    report = check_certificate(partition, candidate, config, samples, seed)
    if not report.ok:
        raise CertificateViolation("%d certificate violation(s); first: %s"
                                   % (len(report.violations), report.violations[0]),
                                   report.violations)
    return report
