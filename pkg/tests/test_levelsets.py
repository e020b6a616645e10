import csv
import io as _io

import numpy as np
import pytest

from pwalyap import levelsets
from pwalyap.benchmarks import canonical_4d, flower
from pwalyap.engine import analyze
from pwalyap.errors import DimensionUnsupported
from pwalyap.model import LyapunovCandidate


@pytest.fixture(scope="module")
def certified():
    res = analyze(flower(), "vector-field")
    assert res.valid
    return res.partition, res.candidate


def test_segment_in_triangle():
    tri = np.array([(0, 0), (2, 0), (0, 2)], float)
    a, b = levelsets.cell_level_segment(tri, (1.0, 0.0), 0.0, 1.0)
    assert sorted([tuple(a), tuple(b)]) == [(1.0, 0.0), (1.0, 1.0)]


def test_segment_missing_or_touching():
    tri = np.array([(0, 0), (2, 0), (0, 2)], float)
    assert levelsets.cell_level_segment(tri, (1.0, 0.0), 0.0, 3.0) is None
    assert levelsets.cell_level_segment(tri, (1.0, 0.0), 0.0, 2.0) is None
    assert levelsets.cell_level_segment(tri, (0.0, 0.0), 1.0, 1.0) is None


def test_roa_level_is_a_closed_curve(certified):
    P, cand = certified
    c = levelsets.roa_level(P, cand)
    segs = levelsets.level_segments(P, cand, [c])
    lines = levelsets.polylines(segs)
    assert len(lines) == 1
    points, closed = lines[0]
    assert closed
    values = [cand.evaluate(P, x) for x in points]
    assert np.allclose(values, c, rtol=1e-9)


def test_neighbouring_segments_share_endpoints(certified):
    P, cand = certified
    c = 0.5 * levelsets.roa_level(P, cand)
    segs = levelsets.level_segments(P, cand, [c])
    ends = [e for s in segs for e in (s.start, s.end)]
    for e in ends:
        twins = sum(np.linalg.norm(e - f) <= 1e-8 for f in ends)
        assert twins >= 2


def test_level_above_maximum_is_empty(certified):
    P, cand = certified
    top = max(cand.evaluate(P, x) for x in P.vertices.array)
    assert levelsets.level_segments(P, cand, [2 * top + 1]) == []


def test_boundary_vertices_of_flower():
    assert levelsets.boundary_vertices(flower()) == [1, 2, 3, 4]


def test_four_dimensional_input():
    P = canonical_4d()
    cand = LyapunovCandidate(P.cell_ids, np.zeros((len(P), 4)), np.zeros(len(P)), np.zeros(len(P)))
    with pytest.raises(DimensionUnsupported):
        levelsets.level_segments(P, cand, [1.0])
    with pytest.raises(DimensionUnsupported):
        levelsets.field_samples(P)


def test_field_samples_lie_inside_their_cells():
    P = flower()
    rows = levelsets.field_samples(P, per_cell=6)
    assert len(rows) == 6 * len(P)
    for cid, x, y, dx, dy in rows:
        cell = P.cell(int(cid))
        assert np.all(P.margins((x, y))[P.cell_ids.index(int(cid))] < 0)
        assert np.allclose(cell.law((x, y)), (dx, dy))


def test_csv_columns(certified):
    P, cand = certified
    segs = levelsets.level_segments(P, cand, [0.01])
    rows = list(csv.reader(_io.StringIO(levelsets.segments_csv(segs))))
    assert rows[0] == ["level", "cell", "x0", "y0", "x1", "y1"]
    assert len(rows) == len(segs) + 1
    rows = list(csv.reader(_io.StringIO(levelsets.field_csv(levelsets.field_samples(P, 2)))))
    assert rows[0] == ["cell", "x", "y", "dx", "dy"]
