"""New-vertex strategies and Delaunay sub-cell formation.

A refinement round proposes points on edges of cells with positive slack
(the buffer), finds every cell whose closure contains a buffered point,
and replaces each such cell by the Delaunay triangulation of its vertices
plus the buffered points it contains.  Inserting a point into every cell
that touches it keeps neighbouring cells vertex-conforming, which is what
the continuity equalities of the LP rely on.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import (BadWeights, DegenerateCrossing, DegeneratePointSet, NoEligibleEdge,
                     NoSlackCells, PointOffBoundary, RefinementError)
from .geometry import BOUNDARY_TOL, DEDUP_TOL
from .lp import slack_cells
from .model import Cell, LyapunovCandidate, Partition, eval_dynamics

logger = logging.getLogger(__name__)

_TIE_RTOL = 1e-12


class Strategy(str, enum.Enum):
    NAIVE = "naive"
    LYAPUNOV = "lyapunov"
    VECTOR_FIELD = "vector-field"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        aliases = {"lyapunov-based": "lyapunov", "vector_field": "vector-field",
                   "vectorfield": "vector-field"}
        return cls(aliases.get(str(value).lower(), str(value).lower()))


@dataclass
class Proposal:
    """Where a buffered point came from (for logs and tests)."""

    cell_id: int
    edge: tuple[int, int]
    alpha: float
    point: np.ndarray
    rule: str


@dataclass
class RefinementPlan:
    buffer: list[np.ndarray] = field(default_factory=list)
    split_set: set[int] = field(default_factory=set)
    per_cell_new: dict[int, list[np.ndarray]] = field(default_factory=dict)
    proposals: list[Proposal] = field(default_factory=list)
    # buffer positions per split cell, and the sub-simplices (global vertex
    # ids) once the plan has been screened against a partition
    per_cell_index: dict[int, list[int]] = field(default_factory=dict, repr=False)
    subdivision: dict[int, list[tuple[int, ...]]] | None = field(default=None, repr=False)
    sources: list = field(default_factory=list, repr=False)

    def __bool__(self):
        return bool(self.buffer)


def new_vertex(v_j, v_k, alpha: float, beta: float | None = None) -> np.ndarray:
    """``alpha * v_j + beta * v_k`` on the segment (``beta`` defaults to ``1 - alpha``)."""
    beta = 1.0 - alpha if beta is None else beta
    if not (0.0 <= alpha <= 1.0 and 0.0 <= beta <= 1.0) or abs(alpha + beta - 1.0) > 1e-12:
        raise BadWeights("weights must be a convex combination, got %r, %r" % (alpha, beta))
    return alpha * np.asarray(v_j, dtype=float) + beta * np.asarray(v_k, dtype=float)


def _argbest(edges, scores, maximize):
    """Edge with the best score; near-ties go to the smallest id pair."""
    scores = np.asarray(scores, dtype=float)
    best = scores.max() if maximize else scores.min()
    slack = _TIE_RTOL * max(abs(best), 1.0)
    tied = [e for e, s in zip(edges, scores) if (s >= best - slack if maximize else s <= best + slack)]
    return min(tied)


def _slack_set(candidate, zero_tolerance):
    I_s = slack_cells(candidate, zero_tolerance)
    if not I_s:
        raise NoSlackCells("no cell has positive slack")
    return I_s


def _midpoint_of_longest(partition: Partition, cell: Cell, rule="longest-edge") -> Proposal:
    ids = cell.vertex_ids
    j, k = geometry.longest_edge(partition.points(cell), ids=ids)
    V = partition.vertices.array
    edge = tuple(sorted((ids[j], ids[k])))
    return Proposal(cell.id, edge, 0.5, new_vertex(V[edge[0]], V[edge[1]], 0.5), rule)


def _collides(partition: Partition, point) -> bool:
    return partition.vertices.find(point) is not None


def _keep(partition, proposals):
    kept = []
    for prop in proposals:
        if _collides(partition, prop.point):
            logger.debug("dropping proposal on edge %s of cell %d: hits an existing vertex",
                         prop.edge, prop.cell_id)
        else:
            kept.append(prop)
    return kept


def propose_naive(partition: Partition, candidate: LyapunovCandidate,
                  zero_tolerance: float = 1e-8) -> RefinementPlan:
    """Midpoint of the longest edge of the single cell with the largest slack.

    If that split would create a degenerate cell, the next cell in order
    of decreasing slack is tried.
    """
    I_s = _slack_set(candidate, zero_tolerance)
    order = sorted(I_s, key=lambda c: (-candidate.piece(c)[2], c))
    for cid in order:
        try:
            prop = _midpoint_of_longest(partition, partition.cell(cid))
        except NoEligibleEdge:
            if cid == order[0] and len(order) == 1:
                raise
            continue
        plan = screen_slivers(partition, assemble_plan(partition, _keep(partition, [prop])))
        if plan:
            return plan
    return RefinementPlan()


def vdot_sign(values) -> int:
    values = np.asarray(values)
    if np.all(values >= 0):
        return 1
    if np.all(values <= 0):
        return -1
    return 0


def crossing_weight(vdot_j: float, vdot_k: float) -> float:
    """``alpha`` with ``alpha*vdot_j + (1-alpha)*vdot_k = 0``."""
    if vdot_j == vdot_k:
        raise DegenerateCrossing("equal derivatives at both endpoints")
    return vdot_k / (vdot_k - vdot_j)


def _lyapunov_proposals(partition, candidate, cell):
    V = partition.vertices.array
    p = candidate.piece(cell.id)[0]
    vdot = {v: float(p @ eval_dynamics(cell, V[v])) for v in cell.vertex_ids}
    edges = partition.edges(cell)
    if not edges:
        return []
    if vdot_sign(list(vdot.values())) == 0:
        crossing = [(j, k) for j, k in edges if vdot[j] * vdot[k] < 0]
        if crossing:
            out = []
            for j, k in crossing:
                alpha = crossing_weight(vdot[j], vdot[k])
                out.append(Proposal(cell.id, (j, k), alpha,
                                    new_vertex(V[j], V[k], alpha), "vdot-crossing"))
            return out
    j, k = _argbest(edges, [abs(vdot[j] - vdot[k]) for j, k in edges], maximize=True)
    return [Proposal(cell.id, (j, k), 0.5, new_vertex(V[j], V[k], 0.5), "max-vdot-variation")]


def propose_lyapunov_based(partition: Partition, candidate: LyapunovCandidate,
                           zero_tolerance: float = 1e-8) -> RefinementPlan:
    """Zero crossings of the candidate's derivative along edges of every slack cell.

    Cells whose derivative keeps one sign get the midpoint of the edge
    with the largest derivative variation instead.
    """
    I_s = _slack_set(candidate, zero_tolerance)
    proposals = []
    for cid in sorted(I_s):
        proposals.extend(_lyapunov_proposals(partition, candidate, partition.cell(cid)))
    return assemble_plan(partition, _keep(partition, proposals))


def bisector_weight(speed_j: float, speed_k: float) -> float:
    """``alpha`` placing the point where the linear field bisects the endpoint directions."""
    return 1.0 / (1.0 + speed_j / speed_k)


def _vector_field_proposal(partition, cell):
    V = partition.vertices.array
    edges = partition.edges(cell)
    field_at = {v: eval_dynamics(cell, V[v]) for v in cell.vertex_ids}
    speed = {v: float(np.linalg.norm(f)) for v, f in field_at.items()}
    usable, cosines = [], []
    for j, k in edges:
        if speed[j] <= 0.0 or speed[k] <= 0.0:
            continue
        usable.append((j, k))
        cosines.append(float(field_at[j] @ field_at[k]) / (speed[j] * speed[k]))
    if not usable:
        logger.warning("cell %d: vector field vanishes on every eligible edge; "
                       "falling back to the longest-edge midpoint", cell.id)
        return _midpoint_of_longest(partition, cell, rule="zero-field-fallback")
    if len(usable) < len(edges):
        logger.warning("cell %d: skipped edges with a zero vector field endpoint", cell.id)
    j, k = _argbest(usable, cosines, maximize=False)
    alpha = bisector_weight(speed[j], speed[k])
    return Proposal(cell.id, (j, k), alpha, new_vertex(V[j], V[k], alpha), "min-cosine")


def propose_vector_field(partition: Partition, candidate: LyapunovCandidate,
                         zero_tolerance: float = 1e-8) -> RefinementPlan:
    """One point per slack cell on the edge whose endpoint fields disagree most."""
    I_s = _slack_set(candidate, zero_tolerance)
    proposals = [_vector_field_proposal(partition, partition.cell(cid)) for cid in sorted(I_s)]
    return assemble_plan(partition, _keep(partition, proposals))


_PROPOSERS = {
    Strategy.NAIVE: propose_naive,
    Strategy.LYAPUNOV: propose_lyapunov_based,
    Strategy.VECTOR_FIELD: propose_vector_field,
}


def propose(strategy, partition: Partition, candidate: LyapunovCandidate,
            zero_tolerance: float = 1e-8) -> RefinementPlan:
    """Dispatch to a strategy; an empty proposal falls back to the naive rule."""
    strategy = Strategy.parse(strategy)
    plan = screen_slivers(partition,
                          _PROPOSERS[strategy](partition, candidate, zero_tolerance))
    if not plan and strategy is not Strategy.NAIVE:
        logger.warning("%s refinement proposed nothing usable; using the naive rule",
                       strategy.value)
        plan = propose_naive(partition, candidate, zero_tolerance)
    if not plan:
        raise RefinementError("every candidate split would create a degenerate cell")
    return plan


def assemble_plan(partition: Partition, buffer) -> RefinementPlan:
    """Split set and per-cell new vertices for a buffer of boundary points.

    ``buffer`` may hold plain points or :class:`Proposal` objects.  A point
    on a facet shared by several cells is assigned to all of them.
    """
    buffer = list(buffer)
    proposals = [b for b in buffer if isinstance(b, Proposal)]
    points = [b.point if isinstance(b, Proposal) else np.asarray(b, dtype=float) for b in buffer]
    plan = RefinementPlan(proposals=proposals, sources=buffer)
    for x in points:
        if any(np.linalg.norm(x - y) <= DEDUP_TOL for y in plan.buffer):
            continue
        if _collides(partition, x):
            continue
        tol = BOUNDARY_TOL * max(1.0, float(np.abs(x).max()))
        margins = partition.margins(x)
        if np.all(margins > tol):
            raise PointOffBoundary("point %s is outside every cell" % np.array2string(x))
        if np.any(margins < -tol):
            raise PointOffBoundary("point %s is interior to a cell" % np.array2string(x))
        plan.buffer.append(x)
        for k in np.flatnonzero(margins <= tol):
            cid = partition.cells[k].id
            plan.split_set.add(cid)
            plan.per_cell_new.setdefault(cid, []).append(x)
            plan.per_cell_index.setdefault(cid, []).append(len(plan.buffer) - 1)
    return plan


def _subdivide(partition: Partition, plan: RefinementPlan):
    """Triangulate every split cell; also report buffer points that create slivers."""
    store = partition.vertices.copy()
    new_ids = [store.add(x) for x in plan.buffer]
    V = store.array
    subdivision, bad = {}, set()
    for cid in sorted(plan.split_set):
        cell = partition.cell(cid)
        mine = plan.per_cell_index[cid]
        added = [new_ids[i] for i in mine if new_ids[i] not in cell.vertex_ids]
        ids = list(cell.vertex_ids) + added
        try:
            local = geometry.triangulate_cell_with_new_vertices(
                V[list(cell.vertex_ids)], V[added], ids=ids)
        except DegeneratePointSet:
            bad.update(mine)
            continue
        simplices = [tuple(ids[i] for i in s) for s in local]
        # Qhull may leave out a point it judges coplanar; the neighbour would
        # then hold a vertex this cell lacks
        used = {v for s in simplices for v in s}
        bad.update(i for i in mine if new_ids[i] not in used)
        slivers = [s for s in simplices if geometry.is_sliver(V[list(s)])]
        if slivers:
            culprits = {i for i in mine if any(new_ids[i] in s for s in slivers)}
            bad.update(culprits or mine)
        subdivision[cid] = simplices
    return subdivision, bad


def screen_slivers(partition: Partition, plan: RefinementPlan) -> RefinementPlan:
    """Drop buffered points whose insertion would create a degenerate cell.

    A dropped point is removed from every cell it touches, so neighbours
    stay vertex-conforming.  The surviving plan carries its triangulation.
    """
    while plan.buffer:
        subdivision, bad = _subdivide(partition, plan)
        if not bad:
            plan.subdivision = subdivision
            return plan
        rejected = [plan.buffer[i] for i in sorted(bad)]
        logger.info("dropping %d proposed vertex(es) that would create slivers", len(rejected))

        def point(item):
            return item.point if isinstance(item, Proposal) else np.asarray(item, dtype=float)

        survivors = [item for item in plan.sources
                     if not any(np.linalg.norm(point(item) - r) <= DEDUP_TOL for r in rejected)]
        plan = assemble_plan(partition, survivors)
    return plan


def apply_plan(partition: Partition, plan: RefinementPlan) -> Partition:
    """Replace every cell of the split set by its Delaunay sub-simplices."""
    if not plan.buffer:
        return partition
    store = partition.vertices.copy()
    for x in plan.buffer:
        store.add(x)
    subdivision = plan.subdivision
    if subdivision is None:
        subdivision, _ = _subdivide(partition, plan)
    next_id = partition.next_cell_id
    cells = []
    for c in partition.cells:
        if c.id not in plan.split_set:
            cells.append(Cell(c.id, c.vertex_ids, c.law))
            continue
        for s in subdivision[c.id]:
            cells.append(Cell(next_id, s, c.law))
            next_id += 1
    refined = partition.with_cells(store, cells)
    refined.inherit_caches(partition)
    return refined
