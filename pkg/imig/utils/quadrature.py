"""
imig - Quadrature Rules
========================
Gauss-Legendre rules on the unit interval and unit square, and collapsed
(Duffy) Gauss rules on the reference triangle (0,0)-(1,0)-(0,1).
"""

from functools import lru_cache
from math import ceil
from typing import NamedTuple

import numpy as np


class QuadratureRule(NamedTuple):
    points: np.ndarray   # (n, dim) reference coordinates
    weights: np.ndarray  # (n,)


@lru_cache(maxsize=None)
def _gauss_unit(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def line_rule(degree):
    """Gauss-Legendre rule on [0, 1] exact for polynomials of the given degree."""
    n = max(1, ceil((degree + 1) / 2))
    x, w = _gauss_unit(n)
    return QuadratureRule(x[:, None], w)


def quad_rule(degree):
    """Tensor Gauss-Legendre rule on [0, 1]^2."""
    n = max(1, ceil((degree + 1) / 2))
    x, w = _gauss_unit(n)
    X, Y = np.meshgrid(x, x, indexing='xy')
    W = np.outer(w, w)
    return QuadratureRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel())


def triangle_rule(degree):
    """Collapsed Gauss rule on the reference triangle, exact to the given total degree."""
    n = max(1, ceil((degree + 2) / 2))
    u, wu = _gauss_unit(n)
    U, V = np.meshgrid(u, u, indexing='ij')
    WU, WV = np.meshgrid(wu, wu, indexing='ij')
    r = U
    s = V * (1.0 - U)
    w = WU * WV * (1.0 - U)
    return QuadratureRule(np.column_stack([r.ravel(), s.ravel()]), w.ravel())


def cell_rule(n_vertices, degree):
    return triangle_rule(degree) if n_vertices == 3 else quad_rule(degree)
