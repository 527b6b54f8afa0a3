"""
imig - Reference Lagrange Elements
===================================
Nodal Lagrange shape functions of degree 1 and 2 on the reference triangle
(0,0)-(1,0)-(0,1) and the reference square [0,1]^2.

Node ordering follows the legacy VTK cell conventions so exported DG fields
need no permutation:
    triangle  : vertices, then midpoints of edges 0-1, 1-2, 2-0
    quad      : vertices (counter-clockwise), midpoints of edges 0-1, 1-2, 2-3, 3-0, center
"""

from functools import lru_cache

import numpy as np

# 1D Lagrange nodes on [0, 1]
_LINE_NODES = {1: np.array([0.0, 1.0]), 2: np.array([0.0, 0.5, 1.0])}

# (i, j) 1D node index pairs per quad node, VTK order
_QUAD_PAIRS = {
    1: [(0, 0), (1, 0), (1, 1), (0, 1)],
    2: [(0, 0), (2, 0), (2, 2), (0, 2), (1, 0), (2, 1), (1, 2), (0, 1), (1, 1)],
}

VTK_CELL_TYPES = {(3, 1): 'triangle', (3, 2): 'triangle6', (4, 1): 'quad', (4, 2): 'quad9'}


class LagrangeTriangle:
    """P1 / P2 Lagrange element on the reference triangle."""

    n_vertices = 3

    def __init__(self, degree):
        if degree not in (1, 2):
            raise ValueError(f"Unsupported Lagrange degree {degree}")
        self.degree = degree
        nodes = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
        if degree == 2:
            nodes += [(0.5, 0.0), (0.5, 0.5), (0.0, 0.5)]
        self.nodes = np.array(nodes)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    def values(self, ref):
        ref = np.atleast_2d(ref)
        L1, L2 = ref[:, 0], ref[:, 1]
        L0 = 1.0 - L1 - L2
        if self.degree == 1:
            return np.column_stack([L0, L1, L2])
        return np.column_stack([
            L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1),
            4 * L0 * L1, 4 * L1 * L2, 4 * L2 * L0,
        ])

    def gradients(self, ref):
        """Reference gradients, shape (n_points, n_nodes, 2)."""
        ref = np.atleast_2d(ref)
        n = ref.shape[0]
        L1, L2 = ref[:, 0], ref[:, 1]
        L0 = 1.0 - L1 - L2
        # dL/dr and dL/ds for L0, L1, L2
        dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        if self.degree == 1:
            return np.broadcast_to(dL, (n, 3, 2)).copy()
        L = [L0, L1, L2]
        out = np.empty((n, 6, 2))
        for a in range(3):
            out[:, a, :] = (4 * L[a] - 1)[:, None] * dL[a]
        for k, (a, b) in enumerate([(0, 1), (1, 2), (2, 0)]):
            out[:, 3 + k, :] = 4 * (L[a][:, None] * dL[b] + L[b][:, None] * dL[a])
        return out


class LagrangeQuad:
    """Q1 / Q2 tensor-product Lagrange element on [0, 1]^2."""

    n_vertices = 4

    def __init__(self, degree):
        if degree not in (1, 2):
            raise ValueError(f"Unsupported Lagrange degree {degree}")
        self.degree = degree
        self._pairs = np.array(_QUAD_PAIRS[degree])
        line = _LINE_NODES[degree]
        self.nodes = np.column_stack([line[self._pairs[:, 0]], line[self._pairs[:, 1]]])

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    def _line(self, t):
        """1D Lagrange values and derivatives at t, shapes (n, degree+1)."""
        t = np.asarray(t)
        if self.degree == 1:
            return np.column_stack([1 - t, t]), np.column_stack([-np.ones_like(t), np.ones_like(t)])
        v = np.column_stack([2 * (t - 0.5) * (t - 1), -4 * t * (t - 1), 2 * t * (t - 0.5)])
        d = np.column_stack([4 * t - 3, -8 * t + 4, 4 * t - 1])
        return v, d

    def values(self, ref):
        ref = np.atleast_2d(ref)
        vx, _ = self._line(ref[:, 0])
        vy, _ = self._line(ref[:, 1])
        return vx[:, self._pairs[:, 0]] * vy[:, self._pairs[:, 1]]

    def gradients(self, ref):
        ref = np.atleast_2d(ref)
        vx, dx = self._line(ref[:, 0])
        vy, dy = self._line(ref[:, 1])
        i, j = self._pairs[:, 0], self._pairs[:, 1]
        return np.stack([dx[:, i] * vy[:, j], vx[:, i] * dy[:, j]], axis=-1)


@lru_cache(maxsize=None)
def reference_element(n_vertices, degree):
    """Cached reference element for a cell with 3 or 4 vertices."""
    if n_vertices == 3:
        return LagrangeTriangle(degree)
    if n_vertices == 4:
        return LagrangeQuad(degree)
    raise ValueError(f"No reference element with {n_vertices} vertices")


def affine_maps(vertices):
    """
    Affine maps x = v0 + J xi for triangles and axis-aligned rectangles.

    Args:
        vertices: (n_cells, n_vertices, 2), counter-clockwise

    Returns:
        (origin (n,2), J (n,2,2), det (n,), inverse (n,2,2))
    """
    v0 = vertices[:, 0, :]
    e1 = vertices[:, 1, :] - v0
    e2 = vertices[:, -1, :] - v0
    J = np.stack([e1, e2], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    with np.errstate(divide='ignore', invalid='ignore'):
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
    return v0, J, det, inv
