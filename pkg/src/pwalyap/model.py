"""Partitioned piecewise-affine dynamics and piecewise-affine Lyapunov candidates."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
from scipy.optimize import linprog

from . import geometry
from .errors import (
    InvalidPartition,
    NonpositiveSamplingTime,
    OriginOutsideDomain,
    StartOutsideDomain,
)
from .geometry import BOUNDARY_TOL, DEDUP_TOL

logger = logging.getLogger(__name__)

CONTINUITY_TOL = 1e-6


@dataclass(frozen=True)
class AffineLaw:
    """Local vector field ``x -> A x + a``."""

    A: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        a = np.array(self.a, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or a.shape != (A.shape[0],):
            raise ValueError("law needs an n x n matrix and an n-vector")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(a))):
            raise ValueError("law entries must be finite")
        A.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a", a)

    def __call__(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.a

    @classmethod
    def linear(cls, A):
        A = np.asarray(A, dtype=float)
        return cls(A, np.zeros(A.shape[0]))


@dataclass
class Cell:
    id: int
    vertex_ids: tuple[int, ...]
    law: AffineLaw
    contains_origin: bool = False

    def __post_init__(self):
        self.vertex_ids = tuple(sorted(int(v) for v in self.vertex_ids))


class VertexStore:
    """Append-only point store that merges points closer than ``DEDUP_TOL``."""

    _BUCKET = 1e-7

    def __init__(self, dim: int, points: Iterable = ()):
        self.dim = dim
        self._coords: list[np.ndarray] = []
        self._buckets: dict[tuple, list[int]] = {}
        self._array = None
        for p in points:
            self.add(p)

    def __len__(self):
        return len(self._coords)

    def __getitem__(self, i):
        return self._coords[i]

    @property
    def array(self) -> np.ndarray:
        if self._array is None or len(self._array) != len(self._coords):
            self._array = np.array(self._coords, dtype=float).reshape(-1, self.dim)
        return self._array

    def _key(self, x):
        return tuple(int(k) for k in np.floor(x / self._BUCKET))

    def find(self, x) -> int | None:
        x = np.asarray(x, dtype=float)
        key = self._key(x)
        best, best_d = None, DEDUP_TOL
        for offset in itertools.product((-1, 0, 1), repeat=self.dim):
            for i in self._buckets.get(tuple(k + o for k, o in zip(key, offset)), ()):
                d = float(np.linalg.norm(self._coords[i] - x))
                if d <= best_d and (best is None or d < best_d or i < best):
                    best, best_d = i, d
        return best

    def add(self, x) -> int:
        """Id of ``x``, inserting it unless an existing vertex is within tolerance."""
        x = np.array(x, dtype=float).reshape(-1)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            raise ValueError("vertex must be a finite %d-vector" % self.dim)
        found = self.find(x)
        if found is not None:
            return found
        x.setflags(write=False)
        self._coords.append(x)
        self._buckets.setdefault(self._key(x), []).append(len(self._coords) - 1)
        return len(self._coords) - 1

    def copy(self) -> "VertexStore":
        other = VertexStore(self.dim)
        other._coords = list(self._coords)
        other._buckets = {k: list(v) for k, v in self._buckets.items()}
        return other


class Partition:
    """Cells sharing a global vertex store, each carrying an affine law.

    ``continuous_dynamics`` declares whether the laws must agree on shared
    vertices; partitions built from discontinuous switched systems set it
    to False and the continuity check is then not part of validation.
    """

    def __init__(self, vertices: VertexStore, cells: list[Cell],
                 continuous_dynamics: bool = True, metadata: dict | None = None):
        self.vertices = vertices
        self.dim = vertices.dim
        self.cells = list(cells)
        self.continuous_dynamics = continuous_dynamics
        self.metadata = dict(metadata or {})
        self.origin_id = vertices.find(np.zeros(self.dim))
        for c in self.cells:
            c.contains_origin = self.origin_id is not None and self.origin_id in c.vertex_ids
        self._by_id = {c.id: c for c in self.cells}
        if len(self._by_id) != len(self.cells):
            raise ValueError("cell ids must be unique")
        self._hs: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._edges: dict[int, list[tuple[int, int]]] = {}
        self._stacked = None
        self._vertex_cells = None

    @classmethod
    def from_arrays(cls, vertices, cells, continuous_dynamics=True, metadata=None):
        """Build from a vertex array and ``(vertex_indices, A, a)`` triples.

        Cell ids are assigned in order.  Duplicate input vertices are merged.
        """
        V = geometry.as_points(vertices)
        store = VertexStore(V.shape[1])
        remap = [store.add(v) for v in V]
        built = []
        for k, (idx, A, a) in enumerate(cells):
            built.append(Cell(k, tuple(remap[i] for i in idx), AffineLaw(A, a)))
        return cls(store, built, continuous_dynamics, metadata)

    def __len__(self):
        return len(self.cells)

    def cell(self, cell_id: int) -> Cell:
        return self._by_id[cell_id]

    @property
    def cell_ids(self) -> list[int]:
        return [c.id for c in self.cells]

    @property
    def next_cell_id(self) -> int:
        return max(self._by_id, default=-1) + 1

    def points(self, cell: Cell | int) -> np.ndarray:
        if not isinstance(cell, Cell):
            cell = self._by_id[cell]
        return self.vertices.array[list(cell.vertex_ids)]

    def halfspaces(self, cell: Cell | int):
        cid = cell.id if isinstance(cell, Cell) else cell
        if cid not in self._hs:
            self._hs[cid] = geometry.halfspaces(self.points(cid))
        return self._hs[cid]

    def edges(self, cell: Cell | int) -> list[tuple[int, int]]:
        """Edges of a cell as ascending vertex-id pairs, origin edges excluded."""
        cell = cell if isinstance(cell, Cell) else self._by_id[cell]
        if cell.id not in self._edges:
            ids = cell.vertex_ids
            local = geometry.edges_of_cell(self.points(cell), exclude_origin=True)
            self._edges[cell.id] = sorted(tuple(sorted((ids[j], ids[k]))) for j, k in local)
        return self._edges[cell.id]

    def inherit_caches(self, other: "Partition") -> None:
        """Reuse geometry computed for cells that ``other`` shares unchanged."""
        for cid, c in self._by_id.items():
            old = other._by_id.get(cid)
            if old is None or old.vertex_ids != c.vertex_ids:
                continue
            if cid in other._hs:
                self._hs[cid] = other._hs[cid]
            if cid in other._edges:
                self._edges[cid] = other._edges[cid]

    def volume(self) -> float:
        return sum(geometry.polytope_volume(self.points(c)) for c in self.cells)

    def vertex_cells(self) -> dict[int, list[int]]:
        """Map vertex id -> ids of the cells listing it, in cell order."""
        if self._vertex_cells is None:
            vc: dict[int, list[int]] = {}
            for c in self.cells:
                for v in c.vertex_ids:
                    vc.setdefault(v, []).append(c.id)
            self._vertex_cells = vc
        return self._vertex_cells

    def bounding_boxes(self):
        V = self.vertices.array
        lo = np.array([V[list(c.vertex_ids)].min(axis=0) for c in self.cells])
        hi = np.array([V[list(c.vertex_ids)].max(axis=0) for c in self.cells])
        return lo, hi

    def _stack(self):
        if self._stacked is None:
            Ns, bs, owners = [], [], []
            for k, c in enumerate(self.cells):
                N, b = self.halfspaces(c)
                Ns.append(N)
                bs.append(b)
                owners.append(np.full(len(b), k))
            starts = np.cumsum([0] + [len(b) for b in bs[:-1]])
            self._stacked = (np.vstack(Ns), np.concatenate(bs), starts)
        return self._stacked

    def margins(self, x) -> np.ndarray:
        """Per-cell ``max(N x - b)``: negative inside, <= tol on the boundary."""
        N, b, starts = self._stack()
        return np.maximum.reduceat(N @ np.asarray(x, dtype=float) - b, starts)

    def locate(self, x, tol: float = BOUNDARY_TOL) -> list[int]:
        """Ids of every cell whose closure contains ``x``, ascending."""
        inside = np.flatnonzero(self.margins(x) <= tol)
        return sorted(self.cells[k].id for k in inside)

    def with_cells(self, vertices: VertexStore, cells: list[Cell]) -> "Partition":
        return Partition(vertices, cells, self.continuous_dynamics, self.metadata)

    def copy(self) -> "Partition":
        cells = [Cell(c.id, c.vertex_ids, c.law) for c in self.cells]
        return Partition(self.vertices.copy(), cells, self.continuous_dynamics, self.metadata)


@dataclass
class LyapunovCandidate:
    """Per-cell affine pieces ``V_i(x) = p_i . x + q_i`` with LP slacks ``tau_i``."""

    cell_ids: list[int]
    p: np.ndarray
    q: np.ndarray
    tau: np.ndarray
    index: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(len(self.cell_ids), -1)
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        self.tau = np.asarray(self.tau, dtype=float).reshape(-1)
        self.index = {cid: k for k, cid in enumerate(self.cell_ids)}

    def piece(self, cell_id: int) -> tuple[np.ndarray, float, float]:
        k = self.index[cell_id]
        return self.p[k], float(self.q[k]), float(self.tau[k])

    def value(self, cell_id: int, x) -> float:
        p, q, _ = self.piece(cell_id)
        return float(p @ np.asarray(x, dtype=float) + q)

    def slack_sum(self) -> float:
        return float(self.tau.sum())

    def is_valid(self, zero_tolerance: float = 1e-8) -> bool:
        return bool(np.all(self.tau <= zero_tolerance))

    def evaluate(self, partition: Partition, x) -> float:
        """V at ``x`` using the lowest-id cell containing it."""
        cells = partition.locate(x)
        if not cells:
            raise StartOutsideDomain("point outside the partition domain")
        return self.value(cells[0], x)


class Violation(NamedTuple):
    kind: str
    cells: tuple
    vertices: tuple
    residual: float
    message: str = ""

    def __str__(self):
        return "%s cells=%s vertices=%s residual=%.3g %s" % (
            self.kind, list(self.cells), list(self.vertices), self.residual, self.message)


def eval_dynamics(cell: Cell, v) -> np.ndarray:
    return cell.law(v)


def eval_vdot(candidate: LyapunovCandidate, cell: Cell, v) -> float:
    p, _, _ = candidate.piece(cell.id)
    return float(p @ eval_dynamics(cell, v))


def discrete_to_continuous(law: AffineLaw, t_s: float) -> AffineLaw:
    """Continuous law whose forward-Euler step of length ``t_s`` is ``law``."""
    if not t_s > 0:
        raise NonpositiveSamplingTime("sampling time must be positive, got %r" % t_s)
    n = law.A.shape[0]
    return AffineLaw((law.A - np.eye(n)) / t_s, law.a / t_s)


def _chebyshev_radius(N: np.ndarray, b: np.ndarray) -> float:
    """Radius of the largest ball inside ``{x: N x <= b}`` (unit-norm rows)."""
    n = N.shape[1]
    A = np.hstack([N, np.ones((len(b), 1))])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = [(None, None)] * n + [(None, 1.0)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        return -np.inf
    return float(res.x[-1])


def _overlap_candidates(lo, hi, tol):
    order = np.argsort(lo[:, 0], kind="stable")
    lo_s = lo[order, 0]
    for a, i in enumerate(order):
        stop = np.searchsorted(lo_s, hi[i, 0] - tol, side="left")
        js = order[a + 1:stop]
        if len(js) == 0:
            continue
        ok = np.all((lo[js] < hi[i] - tol) & (lo[i] < hi[js] - tol), axis=1)
        for j in js[ok]:
            yield (int(min(i, j)), int(max(i, j)))


def validate_partition(partition: Partition) -> list[Violation]:
    """Check the partition invariants; an empty list means well-formed."""
    out: list[Violation] = []
    n = partition.dim
    V = partition.vertices.array
    if not partition.cells:
        return [Violation("empty", (), (), 0.0, "partition has no cells")]

    solid = []
    for c in partition.cells:
        P = partition.points(c)
        if len(P) < n + 1 or geometry.affine_dimension(P) < n:
            out.append(Violation("degenerate_cell", (c.id,), c.vertex_ids, 0.0,
                                 "cell is not a bounded full-dimensional polytope"))
            continue
        if c.law.A.shape != (n, n):
            out.append(Violation("law_shape", (c.id,), (), 0.0, "law dimension mismatch"))
            continue
        if len(P) > n + 1 and n > 1:
            from scipy.spatial import ConvexHull
            extreme = set(int(i) for i in ConvexHull(P).vertices)
            inner = tuple(c.vertex_ids[i] for i in range(len(P)) if i not in extreme)
            if inner:
                out.append(Violation("vertex_not_extreme", (c.id,), inner, 0.0,
                                     "listed vertex is not a vertex of the hull"))
        solid.append(c)
    if any(v.kind in ("degenerate_cell", "law_shape") for v in out):
        return out

    cells = partition.cells
    lo, hi = partition.bounding_boxes()
    span = float(np.max(hi.max(axis=0) - lo.min(axis=0)))
    tol = BOUNDARY_TOL * max(1.0, span)

    # interiors pairwise disjoint
    for i, j in _overlap_candidates(lo, hi, tol):
        Ni, bi = partition.halfspaces(cells[i])
        Nj, bj = partition.halfspaces(cells[j])
        Pi, Pj = partition.points(cells[i]), partition.points(cells[j])
        if np.any(np.all(Ni @ Pj.T - bi[:, None] >= -tol, axis=1)):
            continue
        if np.any(np.all(Nj @ Pi.T - bj[:, None] >= -tol, axis=1)):
            continue
        r = _chebyshev_radius(np.vstack([Ni, Nj]), np.concatenate([bi, bj]))
        if r > tol:
            out.append(Violation("interior_overlap", (cells[i].id, cells[j].id), (), r,
                                 "cell interiors intersect"))

    # shared-vertex closure
    for k, c in enumerate(cells):
        near = np.flatnonzero(np.all((V >= lo[k] - tol) & (V <= hi[k] + tol), axis=1))
        if len(near) == 0:
            continue
        N, b = partition.halfspaces(c)
        depth = np.max(N @ V[near].T - b[:, None], axis=0)
        own = set(c.vertex_ids)
        for v, dep in zip(near, depth):
            if dep <= tol and int(v) not in own and (
                    partition.origin_id is None or int(v) != partition.origin_id):
                out.append(Violation("vertex_closure", (c.id,), (int(v),), float(-dep),
                                     "vertex lies in the cell but is not one of its vertices"))

    # origin must be a vertex of every cell containing it
    origin = np.zeros(n)
    for cid in partition.locate(origin):
        c = partition.cell(cid)
        if not c.contains_origin:
            out.append(Violation("origin_not_vertex", (cid,), (), float(-partition.margins(origin)[cells.index(c)]),
                                 "origin lies in the cell but is not a vertex; run ensure-origin"))

    if partition.continuous_dynamics:
        for v, owners in partition.vertex_cells().items():
            if len(owners) < 2:
                continue
            x = V[v]
            fields = [partition.cell(cid).law(x) for cid in owners]
            for (ci, fi), (cj, fj) in itertools.combinations(zip(owners, fields), 2):
                jump = float(np.linalg.norm(fi - fj))
                if jump > CONTINUITY_TOL:
                    out.append(Violation("dynamics_continuity", (ci, cj), (v,), jump,
                                         "vector field differs at a shared vertex"))
    return out


def require_valid(partition: Partition) -> None:
    violations = validate_partition(partition)
    if violations:
        raise InvalidPartition("partition has %d violation(s); first: %s"
                               % (len(violations), violations[0]), violations)


def dynamics_jumps(partition: Partition) -> float:
    """Largest vector-field mismatch at a shared vertex (informational)."""
    V = partition.vertices.array
    worst = 0.0
    for v, owners in partition.vertex_cells().items():
        fields = [partition.cell(cid).law(V[v]) for cid in owners]
        for fi, fj in itertools.combinations(fields, 2):
            worst = max(worst, float(np.linalg.norm(fi - fj)))
    return worst


def ensure_origin_vertex(partition: Partition) -> Partition:
    """Re-triangulate cells that contain the origin without having it as a vertex."""
    origin = np.zeros(partition.dim)
    holders = partition.locate(origin)
    if not holders:
        raise OriginOutsideDomain("the origin is not in the partition domain")
    todo = [cid for cid in holders if not partition.cell(cid).contains_origin]
    if not todo:
        return partition
    store = partition.vertices.copy()
    oid = store.add(origin)
    next_id = partition.next_cell_id
    cells = []
    for c in partition.cells:
        if c.id not in todo:
            cells.append(Cell(c.id, c.vertex_ids, c.law))
            continue
        ids = list(c.vertex_ids) + [oid]
        pts = store.array[ids]
        for simplex in geometry.triangulate_cell_with_new_vertices(pts[:-1], pts[-1:], ids=ids):
            cells.append(Cell(next_id, tuple(ids[i] for i in simplex), c.law))
            next_id += 1
    logger.info("inserted the origin as a vertex into cells %s", todo)
    return partition.with_cells(store, cells)


class Trajectory(NamedTuple):
    points: np.ndarray
    cells: list
    truncated: bool


def simulate_trajectory(partition: Partition, x0, dt: float, steps: int) -> Trajectory:
    """Forward-Euler trajectory; stops early (``truncated``) when leaving the domain."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.array(x0, dtype=float)
    located = partition.locate(x)
    if not located:
        raise StartOutsideDomain("initial state outside the partition domain")
    index = {c.id: k for k, c in enumerate(partition.cells)}
    N_all, b_all, starts = partition._stack()
    current = located[0]
    points, cells = [x.copy()], [current]
    for _ in range(steps):
        x = x + dt * partition.cell(current).law(x)
        k = index[current]
        stop = starts[k + 1] if k + 1 < len(starts) else len(b_all)
        margin = float(np.max(N_all[starts[k]:stop] @ x - b_all[starts[k]:stop]))
        if margin >= -BOUNDARY_TOL:
            located = partition.locate(x)
            if not located:
                return Trajectory(np.array(points), cells, True)
            current = located[0]
        points.append(x.copy())
        cells.append(current)
    return Trajectory(np.array(points), cells, False)
