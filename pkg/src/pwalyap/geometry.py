"""Polytope computations on vertex-represented cells.

Cells are given as arrays of points (one row per vertex).  Edges and
simplices are returned as tuples of row indices into the input array, so
callers holding a global vertex store can map them back to vertex ids.

Delaunay triangulations are computed on the lifted paraboloid (via Qhull);
cospherical groups of points, where the Delaunay subdivision is not a
triangulation, are split by a pulling triangulation that always cones from
the lowest-index point.  Pulling triangulations induce pulling
triangulations on faces, so two neighbouring cells triangulated
independently agree on their common facet as long as both order points by
the same global ids.
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .errors import (
    DegenerateCell,
    DegeneratePointSet,
    NoEligibleEdge,
    VertexOutsideCell,
)

logger = logging.getLogger(__name__)

DEDUP_TOL = 1e-8
DEGENERACY_TOL = 1e-10
BOUNDARY_TOL = 1e-8

_COSPHERICAL_TOL = 1e-9
_TIE_RTOL = 1e-12


def as_points(points) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2:
        raise ValueError("points must be a 2-D array (one row per point)")
    if not np.all(np.isfinite(P)):
        raise ValueError("points must have finite coordinates")
    return P


def affine_frame(points) -> tuple[np.ndarray, np.ndarray, float]:
    """Return ``(centroid, basis, scale)`` of the affine hull of ``points``.

    ``basis`` has one orthonormal row per spanned direction.  A direction
    counts when its singular value exceeds ``DEGENERACY_TOL`` relative to
    the point-cloud scale.
    """
    P = as_points(points)
    centroid = P.mean(axis=0)
    X = P - centroid
    scale = float(np.abs(X).max()) if X.size else 0.0
    if scale == 0.0:
        return centroid, np.zeros((0, P.shape[1])), 0.0
    _, s, vt = np.linalg.svd(X / scale, full_matrices=False)
    rank = int(np.sum(s > DEGENERACY_TOL * max(1.0, s[0])))
    return centroid, vt[:rank], scale


def affine_dimension(points) -> int:
    return affine_frame(points)[1].shape[0]


def simplex_volume(points) -> float:
    """Volume of a full-dimensional simplex given by its n+1 vertices."""
    P = as_points(points)
    n = P.shape[1]
    if P.shape[0] != n + 1:
        raise ValueError("a simplex in R^%d needs %d vertices" % (n, n + 1))
    return abs(float(np.linalg.det(P[1:] - P[0]))) / math.factorial(n)


def is_sliver(points) -> bool:
    """True when a simplex's volume, relative to its diameter, is below ``DEGENERACY_TOL``."""
    return _simplex_is_flat(as_points(points))


def _simplex_is_flat(P: np.ndarray) -> bool:
    n = P.shape[1]
    edges = P[1:] - P[0]
    diam = max(float(np.max(np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2))), 1e-300)
    return abs(float(np.linalg.det(edges / diam))) <= DEGENERACY_TOL * math.factorial(n)


def polytope_volume(points) -> float:
    P = as_points(points)
    n = P.shape[1]
    if affine_dimension(P) < n:
        return 0.0
    if P.shape[0] == n + 1:
        return simplex_volume(P)
    if n == 1:
        return float(P.max() - P.min())
    return float(ConvexHull(P).volume)


def halfspaces(points) -> tuple[np.ndarray, np.ndarray]:
    """H-representation ``N x <= b`` (unit normals) of a full-dimensional cell."""
    P = as_points(points)
    m, n = P.shape
    if affine_dimension(P) < n:
        raise DegenerateCell("cell is not full-dimensional")
    if n == 1:
        lo, hi = float(P.min()), float(P.max())
        return np.array([[-1.0], [1.0]]), np.array([-lo, hi])
    if m == n + 1:
        T = np.vstack([P.T, np.ones(m)])
        Tinv = np.linalg.inv(T)
        # barycentric weight i = Tinv[i, :n] @ x + Tinv[i, n] >= 0
        N = -Tinv[:, :n]
        b = Tinv[:, n].copy()
    else:
        eq = ConvexHull(P).equations
        N = eq[:, :-1]
        b = -eq[:, -1]
    norms = np.linalg.norm(N, axis=1)
    N = N / norms[:, None]
    b = b / norms
    key = np.round(np.hstack([N, b[:, None]]), 10)
    _, keep = np.unique(key, axis=0, return_index=True)
    keep.sort()
    return N[keep], b[keep]


def contains_point(cell_vertices, x, tol: float = BOUNDARY_TOL) -> bool:
    """True iff ``x`` lies in the closed convex hull of ``cell_vertices``."""
    P = as_points(cell_vertices)
    x = np.asarray(x, dtype=float)
    n = P.shape[1]
    if affine_dimension(P) == n and P.shape[0] > n:
        N, b = halfspaces(P)
        return bool(np.max(N @ x - b) <= tol)
    # lower-dimensional hull: convex-combination feasibility
    m = P.shape[0]
    A_eq = np.vstack([P.T, np.ones(m)])
    b_eq = np.concatenate([x, [1.0]])
    # minimise the l1 residual of the combination
    A = np.hstack([A_eq, np.eye(n + 1), -np.eye(n + 1)])
    c = np.concatenate([np.zeros(m), np.ones(2 * (n + 1))])
    res = linprog(c, A_eq=A, b_eq=b_eq, bounds=(0, None), method="highs")
    return bool(res.status == 0 and res.fun <= tol)


def _is_origin(P: np.ndarray) -> np.ndarray:
    return np.linalg.norm(P, axis=1) <= DEDUP_TOL


def edges_of_cell(cell_vertices, exclude_origin: bool = False) -> list[tuple[int, int]]:
    """The 1-faces of ``conv(cell_vertices)`` as sorted local index pairs.

    Vertices are assumed to be in convex position.  A pair is an edge when
    the smallest face containing both (the intersection of all facets
    through them) has no other vertex.
    """
    P = as_points(cell_vertices)
    m = P.shape[0]
    if m < 2:
        raise DegenerateCell("a cell needs at least two vertices")
    centroid, basis, scale = affine_frame(P)
    d = basis.shape[0]
    if d == 0:
        raise DegenerateCell("all vertices coincide")
    if m == d + 1:
        pairs = list(itertools.combinations(range(m), 2))
    elif d == 1:
        t = (P - centroid) @ basis[0]
        pairs = [tuple(sorted((int(np.argmin(t)), int(np.argmax(t)))))]
    else:
        Y = (P - centroid) @ basis.T / scale
        eq = ConvexHull(Y).equations
        normals, offsets = eq[:, :-1], eq[:, -1]
        norms = np.linalg.norm(normals, axis=1)
        on = np.abs(Y @ (normals / norms[:, None]).T + (offsets / norms)) <= BOUNDARY_TOL
        incidence = np.unique(on.T, axis=0)  # facets x vertices, duplicates merged
        pairs = []
        for j, k in itertools.combinations(range(m), 2):
            common = incidence[:, j] & incidence[:, k]
            if not common.any():
                continue
            face = np.all(incidence[common], axis=0)
            if face.sum() == 2:
                pairs.append((j, k))
    if exclude_origin:
        origin = _is_origin(P)
        pairs = [(j, k) for j, k in pairs if not (origin[j] or origin[k])]
    return pairs


def _lexmin_among(candidates, ids):
    return min(candidates, key=lambda e: tuple(sorted((ids[e[0]], ids[e[1]]))))


def longest_edge(cell_vertices, ids: Sequence[int] | None = None,
                 exclude_origin: bool = True) -> tuple[int, int]:
    """Local index pair of the longest eligible edge.

    Ties (to a relative 1e-12) go to the lexicographically smallest pair of
    ``ids`` (defaults to the local indices).
    """
    P = as_points(cell_vertices)
    ids = list(range(len(P))) if ids is None else list(ids)
    edges = edges_of_cell(P, exclude_origin=exclude_origin)
    if not edges:
        raise NoEligibleEdge("every edge of the cell touches the origin")
    lengths = np.array([np.linalg.norm(P[j] - P[k]) for j, k in edges])
    best = lengths.max()
    tied = [e for e, L in zip(edges, lengths) if L >= best * (1 - _TIE_RTOL)]
    return _lexmin_among(tied, ids)


def _circumsphere(S: np.ndarray) -> tuple[np.ndarray, float]:
    M = 2.0 * (S[1:] - S[0])
    rhs = np.sum(S[1:] ** 2, axis=1) - np.sum(S[0] ** 2)
    center = np.linalg.solve(M, rhs)
    return center, float(np.sum((S[0] - center) ** 2))


def _facets(Y: np.ndarray, S: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Facets of conv(Y[S]) as sorted index tuples (points in convex position)."""
    Q = Y[list(S)]
    centroid, basis, scale = affine_frame(Q)
    d = basis.shape[0]
    Z = (Q - centroid) @ basis.T / scale
    if d == 1:
        return [(S[int(np.argmin(Z[:, 0]))],), (S[int(np.argmax(Z[:, 0]))],)]
    eq = ConvexHull(Z).equations
    normals, offsets = eq[:, :-1], eq[:, -1]
    norms = np.linalg.norm(normals, axis=1)
    on = np.abs(Z @ (normals / norms[:, None]).T + offsets / norms) <= _COSPHERICAL_TOL
    faces = {tuple(S[i] for i in np.flatnonzero(col)) for col in on.T}
    return sorted(faces)


def _pulling(Y: np.ndarray, S: tuple[int, ...]) -> list[tuple[int, ...]]:
    d = affine_dimension(Y[list(S)])
    if len(S) == d + 1:
        return [S]
    apex = S[0]
    out = []
    for face in _facets(Y, S):
        # near-degenerate groups can report faces of the wrong dimension
        if apex in face or affine_dimension(Y[list(face)]) != d - 1:
            continue
        out.extend((apex,) + simplex for simplex in _pulling(Y, face))
    return out


def _normalized(P: np.ndarray) -> np.ndarray:
    X = P - P.mean(axis=0)
    scale = float(np.abs(X).max())
    return X / scale if scale > 0 else X


def delaunay(points) -> list[tuple[int, ...]]:
    """Delaunay triangulation of ``points`` as sorted index tuples.

    Cospherical subsets are triangulated by pulling from their lowest
    index, which makes the result a deterministic function of point order.
    """
    P = as_points(points)
    m, n = P.shape
    if m < n + 1 or affine_dimension(P) < n:
        raise DegeneratePointSet("points do not span R^%d" % n)
    if m == n + 1:
        return [tuple(range(m))]
    Y = _normalized(P)
    if n == 1:
        order = np.argsort(Y[:, 0], kind="stable")
        return sorted(tuple(sorted((int(a), int(b)))) for a, b in zip(order[:-1], order[1:])
                      if Y[b, 0] - Y[a, 0] > DEDUP_TOL)
    options = "Qbb Qc Qz Q12 Qt" + (" Qx" if n > 4 else "")
    try:
        tri = Delaunay(Y, qhull_options=options)
    except QhullError as exc:
        raise DegeneratePointSet(str(exc)) from exc

    groups: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
    raw = []
    for s in tri.simplices:
        S = Y[s]
        if _simplex_is_flat(S):
            continue
        simplex = tuple(sorted(int(i) for i in s))
        raw.append(simplex)
        center, r2 = _circumsphere(S)
        d2 = np.sum((Y - center) ** 2, axis=1)
        on = np.abs(d2 - r2) <= _COSPHERICAL_TOL * max(r2, 1.0)
        groups.setdefault(tuple(int(i) for i in np.flatnonzero(on)), []).append(simplex)

    result = []
    for group in sorted(groups):
        if len(group) == n + 1:
            result.append(group)
            continue
        pulled = []
        if set(group).issuperset(v for s in groups[group] for v in s) and affine_dimension(Y[list(group)]) == n:
            pulled = [s for s in _pulling(Y, group) if len(s) == n + 1]
        covered = sum(simplex_volume(Y[list(s)]) for s in groups[group])
        if abs(sum(simplex_volume(Y[list(s)]) for s in pulled) - covered) > 1e-9 * max(covered, 1e-300):
            # regrouping failed on this group; keep what Qhull produced
            pulled = groups[group]
        result.extend(pulled)
    result = sorted(set(s for s in result if len(s) == n + 1 and not _simplex_is_flat(Y[list(s)])))

    hull_volume = ConvexHull(Y).volume
    total = sum(simplex_volume(Y[list(s)]) for s in result)
    if abs(total - hull_volume) > 1e-9 * hull_volume:
        logger.info("cospherical regrouping lost coverage (%.3g vs %.3g); "
                       "using raw Qhull simplices", total, hull_volume)
        result = sorted(set(raw))
        total = sum(simplex_volume(Y[list(s)]) for s in result)
        if abs(total - hull_volume) > 1e-9 * hull_volume:
            raise DegeneratePointSet("point set is too close to degenerate to triangulate "
                                     "(simplex volume %.3g vs hull %.3g)" % (total, hull_volume))
    return result


def triangulate_cell_with_new_vertices(cell_vertices, new_vertices,
                                       ids: Sequence[int] | None = None) -> list[tuple[int, ...]]:
    """Delaunay sub-simplices of a cell after inserting boundary points.

    Indices refer to the concatenation ``cell_vertices + new_vertices``.
    ``ids`` (one per concatenated point) fixes the tie-break order;
    by default the concatenation order is used.  New points coinciding
    with an existing vertex are ignored.
    """
    P = as_points(cell_vertices)
    new = np.asarray(new_vertices, dtype=float).reshape(-1, P.shape[1])
    for x in new:
        if not contains_point(P, x):
            raise VertexOutsideCell("point %s lies outside the cell" % np.array2string(x))
    combined = np.vstack([P, new]) if len(new) else P
    ids = np.arange(len(combined)) if ids is None else np.asarray(ids)
    if len(ids) != len(combined):
        raise ValueError("ids must match the number of points")

    keep = list(range(len(P)))
    for j in range(len(P), len(combined)):
        kept = combined[keep]
        if np.min(np.linalg.norm(kept - combined[j], axis=1)) > DEDUP_TOL:
            keep.append(j)
    keep = sorted(keep, key=lambda j: ids[j])
    return sorted(tuple(sorted(keep[i] for i in s)) for s in delaunay(combined[keep]))
