import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from pwalyap import geometry
from pwalyap.errors import DegenerateCell, DegeneratePointSet, NoEligibleEdge, VertexOutsideCell

import oracles

TRI = [(0, 0), (1, 0), (0, 1)]
SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]


# edges

def test_triangle_has_all_three_edges():
    assert geometry.edges_of_cell(TRI) == [(0, 1), (0, 2), (1, 2)]


def test_square_edges_exclude_diagonals():
    edges = geometry.edges_of_cell(SQUARE)
    assert edges == oracles.adjacency_lp_edges(np.array(SQUARE, float))
    assert len(edges) == 4
    assert (0, 2) not in edges and (1, 3) not in edges


def test_exclude_origin_leaves_opposite_edge():
    assert geometry.edges_of_cell(TRI, exclude_origin=True) == [(1, 2)]


def test_edges_of_cube():
    cube = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
    edges = geometry.edges_of_cell(cube)
    assert len(edges) == 12
    assert all(np.isclose(np.linalg.norm(cube[j] - cube[k]), 1.0) for j, k in edges)


def test_edges_degenerate_cell():
    with pytest.raises(DegenerateCell):
        geometry.edges_of_cell([(1, 1), (1, 1)])


@st.composite
def convex_position(draw):
    n = draw(st.sampled_from([2, 3]))
    seed = draw(st.integers(0, 2 ** 31 - 1))
    rng = np.random.default_rng(seed)
    count = draw(st.integers(n + 1, 8))
    while True:
        P = rng.normal(size=(count, n))
        hull = ConvexHull(P)
        Q = P[np.sort(hull.vertices)]
        if len(Q) >= n + 1:
            return Q


@settings(max_examples=100)
@given(convex_position())
def test_edges_match_adjacency_lp(P):
    assert geometry.edges_of_cell(P) == oracles.adjacency_lp_edges(P)


# longest edge

def test_longest_edge_of_right_triangle():
    j, k = geometry.longest_edge([(0, 0), (3, 0), (0, 1)], exclude_origin=False)
    assert (j, k) == (1, 2)


def test_longest_edge_tie_goes_to_smallest_pair():
    assert geometry.longest_edge(SQUARE, exclude_origin=False) == (0, 1)
    # with ids reversed the smallest id pair is the local pair (2, 3)
    assert geometry.longest_edge(SQUARE, ids=[13, 12, 11, 10], exclude_origin=False) == (2, 3)


def test_longest_edge_without_eligible_edge():
    with pytest.raises(NoEligibleEdge):
        geometry.longest_edge([(0, 0), (2, 0)])


def test_longest_edge_skips_origin_edges():
    assert geometry.longest_edge([(0, 0), (3, 0), (0, 1)]) == (1, 2)
    assert geometry.longest_edge([(0, 0), (5, 0), (5, 0.1)]) == (1, 2)


# delaunay

def test_delaunay_of_a_simplex_is_itself():
    assert geometry.delaunay(TRI) == [(0, 1, 2)]


def test_delaunay_with_interior_point():
    P = np.array([(0, 0), (2, 0), (0, 2), (0.5, 0.5)], float)
    tris = geometry.delaunay(P)
    assert len(tris) == 3
    assert all(3 in t for t in tris)
    assert oracles.empty_circumsphere_violation(P, tris) <= 1e-12


def test_delaunay_cocircular_square_uses_lowest_index_diagonal():
    tris = geometry.delaunay(SQUARE)
    assert tris == [(0, 1, 2), (0, 2, 3)]
    # both diagonals are Delaunay; the one through point 0 is the documented choice
    P = np.array(SQUARE, float)
    assert oracles.empty_circumsphere_violation(P, tris) <= 1e-12
    assert geometry.delaunay(np.roll(P, -1, axis=0)) == [(0, 1, 2), (0, 2, 3)]


def test_delaunay_rejects_flat_input():
    with pytest.raises(DegeneratePointSet):
        geometry.delaunay([(0, 0), (1, 1), (2, 2), (3, 3)])
    with pytest.raises(DegeneratePointSet):
        geometry.delaunay([(0, 0), (1, 0)])


def test_delaunay_of_cube_corners_with_centre():
    pts = [np.zeros(4)] + [np.array(c) for c in itertools.product((-1.0, 1.0), repeat=4)]
    simplices = geometry.delaunay(pts)
    assert len(simplices) == 48
    assert all(0 in s for s in simplices)
    P = np.array(pts)
    total = sum(oracles.simplex_volume(P[list(s)]) for s in simplices)
    assert math.isclose(total, 16.0, rel_tol=1e-12)


@st.composite
def point_sets(draw):
    n = draw(st.sampled_from([2, 3, 4]))
    seed = draw(st.integers(0, 2 ** 31 - 1))
    rng = np.random.default_rng(seed)
    count = draw(st.integers(n + 1, 12))
    kind = draw(st.sampled_from(["uniform", "lattice"]))
    while True:
        if kind == "uniform":
            P = rng.uniform(-1, 1, size=(count, n))
        else:
            # lattice points are full of cospherical ties
            P = rng.integers(-2, 3, size=(count, n)).astype(float)
            P = np.unique(P, axis=0)
        if len(P) >= n + 1 and np.linalg.matrix_rank(P[1:] - P[0]) == n:
            return P


@settings(max_examples=200)
@given(point_sets())
def test_delaunay_partition_property(P):
    simplices = geometry.delaunay(P)
    total = sum(oracles.simplex_volume(P[list(s)]) for s in simplices)
    assert abs(total - oracles.hull_volume(P)) <= 1e-8 * max(1.0, oracles.hull_volume(P))
    assert oracles.empty_circumsphere_violation(P, simplices) <= 1e-8


@settings(max_examples=50)
@given(point_sets())
def test_delaunay_is_deterministic(P):
    assert geometry.delaunay(P) == geometry.delaunay(P.copy())


@settings(max_examples=30)
@given(point_sets(), st.integers(0, 2 ** 31 - 1))
def test_delaunay_interiors_are_disjoint(P, seed):
    simplices = geometry.delaunay(P)
    rng = np.random.default_rng(seed)
    n = P.shape[1]
    for s in simplices[:4]:
        x = rng.dirichlet(np.ones(n + 1)) @ P[list(s)]
        inside = [t for t in simplices
                  if np.all(oracles.barycentric(P[list(t)], x) > 1e-9)]
        assert inside == [s]


# sub-cell formation

def test_triangle_plus_edge_midpoint_gives_two_triangles():
    simplices = geometry.triangulate_cell_with_new_vertices(TRI, [(0.5, 0.5)])
    assert len(simplices) == 2
    assert all(3 in s for s in simplices)


def test_quadrilateral_plus_midpoint_is_covered():
    quad = np.array([(0, 0), (2, 0), (2.5, 1.5), (0, 1)], float)
    new = np.array([(1.0, 0.0)])
    simplices = geometry.triangulate_cell_with_new_vertices(quad, new)
    P = np.vstack([quad, new])
    assert math.isclose(sum(oracles.simplex_volume(P[list(s)]) for s in simplices),
                        oracles.hull_volume(quad), rel_tol=1e-12)
    assert any(4 in s for s in simplices)
    assert oracles.empty_circumsphere_violation(P, simplices) <= 1e-12


def test_simplex_without_new_vertices_is_unchanged():
    assert geometry.triangulate_cell_with_new_vertices(TRI, []) == [(0, 1, 2)]


def test_new_vertex_outside_cell():
    with pytest.raises(VertexOutsideCell):
        geometry.triangulate_cell_with_new_vertices(TRI, [(1.0, 1.0)])


def test_duplicate_new_vertex_is_ignored():
    simplices = geometry.triangulate_cell_with_new_vertices(TRI, [(1.0, 0.0)])
    assert simplices == [(0, 1, 2)]


@settings(max_examples=60)
@given(point_sets(), st.integers(0, 2 ** 31 - 1))
def test_sub_simplices_stay_inside_parent(P, seed):
    rng = np.random.default_rng(seed)
    Q = P[np.sort(ConvexHull(P).vertices)]
    edges = geometry.edges_of_cell(Q)
    picks = rng.choice(len(edges), size=min(2, len(edges)), replace=False)
    new = [0.5 * (Q[edges[i][0]] + Q[edges[i][1]]) for i in picks]
    simplices = geometry.triangulate_cell_with_new_vertices(Q, new)
    R = np.vstack([Q, new])
    for s in simplices:
        assert all(geometry.contains_point(Q, R[i]) for i in s)
        assert all(oracles.in_convex_hull(Q, R[i]) for i in s)
    total = sum(oracles.simplex_volume(R[list(s)]) for s in simplices)
    assert math.isclose(total, oracles.hull_volume(Q), rel_tol=1e-9)


# membership

@pytest.mark.parametrize("x, expected", [((0.2, 0.2), True), ((1, 1), False),
                                         ((0.5, 0), True), ((0.5, -1e-6), False)])
def test_contains_point(x, expected):
    assert geometry.contains_point(TRI, x) is expected


def test_contains_point_lower_dimensional_hull():
    seg = [(0, 0, 0), (1, 1, 1)]
    assert geometry.contains_point(seg, (0.5, 0.5, 0.5))
    assert not geometry.contains_point(seg, (0.5, 0.5, 0.6))


def test_halfspaces_of_square():
    N, b = geometry.halfspaces(SQUARE)
    assert len(N) == 4
    assert np.allclose(np.linalg.norm(N, axis=1), 1.0)
    assert np.all(N @ np.array([0.5, 0.5]) - b < 0)


def test_is_sliver():
    assert geometry.is_sliver([(0, 0), (1, 0), (2, 1e-11)])
    assert not geometry.is_sliver(TRI)


def test_delaunay_near_cospherical_tesseract_returns_simplices():
    # jitter below the cospherical tolerance makes Qhull's groups ragged
    rng = np.random.default_rng(11)
    corners = np.array(list(itertools.product((-5.0, 5.0), repeat=4)))
    P = np.vstack([np.zeros(4), corners, corners / 2.0 + [0.0, 2.5, 0.0, 0.0]])
    P = np.unique(P, axis=0) + rng.normal(scale=1e-12, size=(len(np.unique(P, axis=0)), 4))
    simplices = geometry.delaunay(P)
    assert all(len(s) == 5 for s in simplices)
    total = sum(geometry.simplex_volume(P[list(s)]) for s in simplices)
    assert total == pytest.approx(geometry.polytope_volume(P), rel=1e-9)
