"""Plot data for planar certificates: level-set segments and vector-field samples.

Level sets are exact: on each cell ``V`` is affine, so ``{V = c}`` is the
cell clipped to a line, found from the sign changes of ``V - c`` along
the cell's boundary.
"""

from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import DimensionUnsupported
from .geometry import BOUNDARY_TOL
from .model import LyapunovCandidate, Partition, eval_dynamics

_MERGE_TOL = 1e-12


@dataclass
class Segment:
    level: float
    cell: int
    start: np.ndarray
    end: np.ndarray


def require_planar(partition: Partition):
    if partition.dim != 2:
        raise DimensionUnsupported("level-set export needs a 2-D system, got n=%d" % partition.dim)


def _hull_cycle(points: np.ndarray) -> np.ndarray:
    """Vertices of a convex polygon in counter-clockwise order."""
    centre = points.mean(axis=0)
    angle = np.arctan2(points[:, 1] - centre[1], points[:, 0] - centre[0])
    return points[np.argsort(angle)]


def cell_level_segment(points: np.ndarray, p, q: float, level: float):
    """The piece of ``{x : p.x + q = level}`` inside a convex polygon, or None."""
    ring = _hull_cycle(np.asarray(points, dtype=float))
    g = ring @ np.asarray(p, dtype=float) + q - level
    scale = max(1.0, float(np.abs(ring @ p + q).max()))
    if np.all(np.abs(g) <= _MERGE_TOL * scale):
        return None  # V is constant on the cell; no curve to draw
    hits = []
    for i in range(len(ring)):
        j = (i + 1) % len(ring)
        gi, gj = g[i], g[j]
        if abs(gi) <= _MERGE_TOL * scale:
            hits.append(ring[i])
        elif gi * gj < 0 and abs(gj) > _MERGE_TOL * scale:
            t = gi / (gi - gj)
            hits.append(ring[i] + t * (ring[j] - ring[i]))
    unique = []
    for h in hits:
        if not any(np.linalg.norm(h - u) <= 1e-12 * max(1.0, np.abs(u).max()) for u in unique):
            unique.append(h)
    if len(unique) < 2:
        return None  # touches the cell at a single vertex
    # the level line meets a convex polygon in one segment; keep its extremes
    direction = np.array([-p[1], p[0]])
    s = [float(u @ direction) for u in unique]
    return unique[int(np.argmin(s))], unique[int(np.argmax(s))]


def level_segments(partition: Partition, candidate: LyapunovCandidate,
                   levels) -> list[Segment]:
    require_planar(partition)
    out = []
    for level in np.atleast_1d(np.asarray(levels, dtype=float)):
        for c in partition.cells:
            p, q, _ = candidate.piece(c.id)
            seg = cell_level_segment(partition.points(c), p, q, float(level))
            if seg is not None:
                out.append(Segment(float(level), c.id, seg[0], seg[1]))
    return out


def polylines(segments: list[Segment], tol: float = 1e-8) -> list[tuple[np.ndarray, bool]]:
    """Chain segments that share endpoints; returns ``(points, closed)`` pairs."""
    remaining = list(segments)
    chains = []
    while remaining:
        seg = remaining.pop(0)
        chain = [seg.start, seg.end]
        grown = True
        while grown:
            grown = False
            for k, other in enumerate(remaining):
                for a, b in ((other.start, other.end), (other.end, other.start)):
                    if np.linalg.norm(a - chain[-1]) <= tol:
                        chain.append(b)
                    elif np.linalg.norm(b - chain[0]) <= tol:
                        chain.insert(0, a)
                    else:
                        continue
                    remaining.pop(k)
                    grown = True
                    break
                if grown:
                    break
        closed = len(chain) > 3 and np.linalg.norm(chain[0] - chain[-1]) <= tol
        chains.append((np.array(chain), bool(closed)))
    return chains


def boundary_vertices(partition: Partition) -> list[int]:
    """Ids of vertices lying on a facet of the domain boundary.

    A cell facet is on the boundary when a point just outside its
    centroid belongs to no cell.
    """
    V = partition.vertices.array
    span = float(np.ptp(V, axis=0).max()) or 1.0
    step = 1e-6 * span
    found = set()
    for c in partition.cells:
        P = partition.points(c)
        N, b = partition.halfspaces(c)
        for normal, offset in zip(N, b):
            on = np.flatnonzero(np.abs(P @ normal - offset) <= BOUNDARY_TOL * max(1.0, abs(offset)))
            if len(on) < partition.dim:
                continue
            probe = P[on].mean(axis=0) + step * normal
            if np.all(partition.margins(probe) > BOUNDARY_TOL * max(1.0, np.abs(probe).max())):
                found.update(c.vertex_ids[i] for i in on)
    return sorted(found)


def roa_level(partition: Partition, candidate: LyapunovCandidate) -> float:
    """Largest level whose sublevel set stays inside the domain: min of V on the boundary.

    ``V`` is affine on each cell, so its minimum over a boundary facet is
    attained at a vertex.
    """
    V = partition.vertices.array
    owners = partition.vertex_cells()
    values = [candidate.value(owners[v][0], V[v]) for v in boundary_vertices(partition)]
    if not values:
        raise ValueError("partition has no boundary vertices")
    return float(min(values))


def field_samples(partition: Partition, per_cell: int = 6) -> np.ndarray:
    """Rows ``(cell, x, y, dx, dy)`` at interior barycentric lattice points of each cell."""
    require_planar(partition)
    m = 2
    while (m - 1) * (m - 2) // 2 < per_cell:
        m += 1
    weights = np.array([(i, j, m - i - j) for i in range(1, m) for j in range(1, m - i)],
                       dtype=float) / m
    weights = weights[:per_cell]
    rows = []
    for c in partition.cells:
        P = partition.points(c)
        triangles = [tuple(range(3))] if len(P) == 3 else geometry.delaunay(P)
        # spread the samples over the cell's triangles by area
        share = _split_count(per_cell, [geometry.simplex_volume(P[list(t)]) for t in triangles])
        for t, k in zip(triangles, share):
            for w in weights[:k]:
                x = w @ P[list(t)]
                f = eval_dynamics(c, x)
                rows.append((c.id, x[0], x[1], f[0], f[1]))
    return np.array(rows, dtype=float).reshape(-1, 5)


def _split_count(total, sizes):
    sizes = np.asarray(sizes, dtype=float)
    raw = total * sizes / sizes.sum()
    counts = np.floor(raw).astype(int)
    for i in np.argsort(counts - raw)[: total - counts.sum()]:
        counts[i] += 1
    return counts


def segments_csv(segments: list[Segment]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "cell", "x0", "y0", "x1", "y1"])
    for s in segments:
        w.writerow([repr(s.level), s.cell, repr(float(s.start[0])), repr(float(s.start[1])),
                    repr(float(s.end[0])), repr(float(s.end[1]))])
    return buf.getvalue()


def field_csv(samples: np.ndarray) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell", "x", "y", "dx", "dy"])
    for row in samples:
        w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    return buf.getvalue()
