"""Built-in benchmark systems."""

from __future__ import annotations

import itertools

import numpy as np

from . import geometry
from .model import Partition

FLOWER_A1 = np.array([[-0.1, 1.0], [-5.0, -0.1]])
FLOWER_A2 = np.array([[-0.1, 5.0], [-1.0, -0.1]])

# Controllable canonical form with characteristic polynomial
# (s+1)(s+2)(s+3)(s+4).  The published matrix shows a zero third row, which
# would leave x3 constant; the superdiagonal 1 is restored here.
CANONICAL_4D_A = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [-24.0, -50.0, -35.0, -10.0],
])
CANONICAL_4D_A_AS_PRINTED = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 0.0],
    [-24.0, -50.0, -35.0, -10.0],
])

MPC_4D_A = np.array([
    [0.4346, -0.2313, -0.6404, 0.3405],
    [-0.6731, 0.1045, -0.0613, 0.3400],
    [-0.0568, 0.7065, -0.086, 0.0159],
    [0.3511, 0.1404, 0.2980, 1.0416],
])
MPC_4D_B = np.array([[0.4346], [-0.6731], [-0.0568], [0.3511]])


def flower() -> Partition:
    """Four cones between the diagonals, clipped to the unit box.

    Upper and lower cones use ``FLOWER_A1``, left and right ``FLOWER_A2``.
    The laws disagree on the diagonals, so the partition is flagged as
    having discontinuous dynamics.
    """
    vertices = [(0, 0), (1, 1), (-1, 1), (-1, -1), (1, -1)]
    zero = np.zeros(2)
    cells = [
        ((0, 1, 2), FLOWER_A1, zero),  # x2 >= |x1|
        ((0, 2, 3), FLOWER_A2, zero),  # x1 <= -|x2|
        ((0, 3, 4), FLOWER_A1, zero),  # x2 <= -|x1|
        ((0, 4, 1), FLOWER_A2, zero),  # x1 >= |x2|
    ]
    return Partition.from_arrays(vertices, cells, continuous_dynamics=False,
                                 metadata={"name": "flower",
                                           "source": "switched linear flower system on |x|_inf <= 1"})


def box_with_origin(A, half_width: float, name: str = "") -> Partition:
    """Delaunay triangulation of a centred box's corners plus the origin, one linear law."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    corners = [np.array(c) * half_width for c in itertools.product((-1.0, 1.0), repeat=n)]
    vertices = [np.zeros(n)] + corners
    cells = [(s, A, np.zeros(n)) for s in geometry.delaunay(vertices)]
    return Partition.from_arrays(vertices, cells, metadata={"name": name})


def canonical_4d(as_printed: bool = False) -> Partition:
    """Stable 4-D canonical system on ``|x|_inf <= 5``."""
    A = CANONICAL_4D_A_AS_PRINTED if as_printed else CANONICAL_4D_A
    name = "canonical4d-as-printed" if as_printed else "canonical4d"
    part = box_with_origin(A, 5.0, name)
    part.metadata["source"] = "controllable canonical form, eigenvalues -1,-2,-3,-4"
    return part


def mpc_4d_plant() -> dict:
    """Discrete-time 4-D plant used with explicit MPC (no control law attached)."""
    return {
        "name": "mpc4d-plant",
        "A": MPC_4D_A.tolist(),
        "B": MPC_4D_B.tolist(),
        "state_bound_inf": 4.0,
        "input_bound_inf": 1.0,
        "horizon": 10,
        "Q": (10 * np.eye(4)).tolist(),
        "R": [[1.0]],
        "sampling_time": 0.01,
        "note": "closed-loop PWA cells require an external explicit-MPC solution",
    }


def mpc_4d_open_loop(half_width: float = 4.0) -> Partition:
    """The plant's open-loop discrete map as a single-law partition (for conversion tests)."""
    part = box_with_origin(MPC_4D_A, half_width, "mpc4d-open-loop-discrete")
    part.metadata["time"] = "discrete"
    return part


def shipped_benchmarks() -> dict:
    return {
        "flower": flower(),
        "canonical4d": canonical_4d(),
        "canonical4d-as-printed": canonical_4d(as_printed=True),
        "mpc4d-plant": mpc_4d_plant(),
    }
