"""Random partition builders shared by several test modules."""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from pwalyap.model import Partition


def random_points(rng, n: int, count: int, spread: float = 1.0) -> np.ndarray:
    """``count`` points in general position, including the origin first."""
    while True:
        P = np.vstack([np.zeros(n), rng.uniform(-spread, spread, size=(count - 1, n))])
        if np.linalg.matrix_rank(P[1:] - P[0]) == n and _separated(P):
            return P


def _separated(P, gap=1e-3):
    d = np.linalg.norm(P[:, None] - P[None], axis=2)
    return d[np.triu_indices(len(P), 1)].min() > gap


def _good_simplices(P):
    tri = Delaunay(P)
    keep = []
    for s in tri.simplices:
        S = P[s]
        vol = abs(np.linalg.det(S[1:] - S[0]))
        diam = np.max(np.linalg.norm(S[:, None] - S[None], axis=2))
        if vol / diam ** P.shape[1] > 1e-4:
            keep.append(tuple(int(i) for i in s))
    return keep, len(keep) == len(tri.simplices)


def random_continuous_partition(rng, n: int, max_cells: int = 20,
                                field: str = "random") -> Partition:
    """Delaunay mesh with a continuous PWA field interpolated from vertex values.

    The field is zero at the origin, so cells touching the origin get a
    purely linear law.  ``field="stable"`` uses x -> -x plus a small
    continuous perturbation.
    """
    while True:
        count = int(rng.integers(n + 2, n + 2 + max(2, max_cells // (2 * n))))
        P = random_points(rng, n, count)
        simplices, ok = _good_simplices(P)
        if ok and 1 <= len(simplices) <= max_cells:
            break
    if field == "stable":
        values = -P + 0.1 * rng.normal(size=P.shape)
    else:
        values = rng.normal(size=P.shape)
    values[0] = 0.0
    cells = []
    for s in simplices:
        S = P[list(s)]
        T = np.hstack([S, np.ones((n + 1, 1))])
        coef = np.linalg.solve(T, values[list(s)])  # rows: A^T then a
        A, a = coef[:n].T, coef[n]
        if 0 in s:
            a = np.zeros(n)
        cells.append((s, A, a))
    return Partition.from_arrays(P, cells)
