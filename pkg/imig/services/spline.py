"""
imig - B-spline Spaces
=======================
Univariate knot vectors and tensor-product B-spline spaces placed on an
axis-aligned Cartesian grid. Values and derivatives come from the Cox-de Boor
recursion, vectorized over evaluation points; dyadic refinement coefficients
come from repeated single-knot insertion.

The parametric coordinate of a space maps affinely onto physical space:
    x = origin + spacing * xi
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse

from imig.exceptions import ConfigError, DomainError

logger = logging.getLogger(__name__)

SUPPORTED_DEGREES = (1, 2)
DOMAIN_TOLERANCE = 1e-12


class BasisValues(NamedTuple):
    """Nonzero basis functions at a batch of points: indices and values, shape (n_points, n_local)."""
    indices: np.ndarray
    values: np.ndarray


class BasisGradients(NamedTuple):
    """Nonzero basis gradients: indices (n_points, n_local), gradients (n_points, n_local, 2)."""
    indices: np.ndarray
    gradients: np.ndarray


# =====================================================
# KNOT VECTORS
# =====================================================

@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open knot vector of degree p."""
    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, 'knots', knots)
        p = self.degree
        if p < 0:
            raise ConfigError(f"Degree must be non-negative, got {p}")
        if knots.ndim != 1 or knots.size < 2 * (p + 1):
            raise ConfigError(f"Knot vector of degree {p} needs at least {2 * (p + 1)} knots")
        if np.any(np.diff(knots) < 0):
            raise ConfigError("Knots must be non-decreasing")
        if knots[-1] <= knots[0]:
            raise ConfigError("Knot vector spans an empty interval")
        # open: end knots repeated exactly p + 1 times
        if np.count_nonzero(knots == knots[0]) != p + 1 or np.count_nonzero(knots == knots[-1]) != p + 1:
            raise ConfigError(f"Knot vector is not open: end knots must repeat exactly {p + 1} times")
        interior = knots[p + 1:-(p + 1)]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if counts.max() > p:
                raise ConfigError(f"Interior knot repeated more than p={p} times")

    @classmethod
    def open_uniform(cls, n_spans, degree):
        """Open knot vector with integer breakpoints 0, 1, ..., n_spans."""
        if n_spans < 1:
            raise ConfigError(f"Need at least one knot span, got {n_spans}")
        knots = np.concatenate([
            np.zeros(degree), np.arange(n_spans + 1, dtype=float), np.full(degree, float(n_spans))
        ])
        return cls(knots, degree)

    @property
    def n_functions(self):
        return self.knots.size - self.degree - 1

    @property
    def breakpoints(self):
        return np.unique(self.knots)

    @property
    def n_spans(self):
        return self.breakpoints.size - 1

    @property
    def bounds(self):
        return self.knots[0], self.knots[-1]

    def find_span(self, xi):
        """Knot span index i with knots[i] <= xi < knots[i+1]; the last span is closed."""
        xi = np.asarray(xi, dtype=float)
        span = np.searchsorted(self.knots, xi, side='right') - 1
        return np.clip(span, self.degree, self.n_functions - 1)

    def check_domain(self, xi):
        lo, hi = self.bounds
        tol = DOMAIN_TOLERANCE * max(1.0, hi - lo)
        xi = np.asarray(xi, dtype=float)
        if np.any(~np.isfinite(xi)) or np.any(xi < lo - tol) or np.any(xi > hi + tol):
            bad = xi[~((xi >= lo - tol) & (xi <= hi + tol))]
            raise DomainError(f"Parameter {bad.ravel()[0]!r} outside knot range [{lo}, {hi}]")
        return np.clip(xi, lo, hi)

    def evaluate(self, xi):
        """Nonzero basis values at xi: (span, values of shape (n, p+1))."""
        xi = self.check_domain(np.atleast_1d(xi))
        span = self.find_span(xi)
        values, _ = _cox_de_boor(self.knots, self.degree, span, xi)
        return span, values

    def derivatives(self, xi):
        """Nonzero basis values and first derivatives at xi: (span, values, derivatives)."""
        xi = self.check_domain(np.atleast_1d(xi))
        span = self.find_span(xi)
        values, lower = _cox_de_boor(self.knots, self.degree, span, xi)
        return span, values, _first_derivatives(self.knots, self.degree, span, lower)

    def support(self, i):
        """Parametric support interval of function i."""
        return self.knots[i], self.knots[i + self.degree + 1]

    def support_spans(self):
        """First and last nonzero span (breakpoint interval index) of every function."""
        bp = self.breakpoints
        i = np.arange(self.n_functions)
        first = np.searchsorted(bp, self.knots[i], side='left')
        last = np.searchsorted(bp, self.knots[i + self.degree + 1], side='left') - 1
        return first, last

    def insert_knot(self, u):
        """
        Insert knot u once (Boehm's algorithm).

        Returns:
            (refined KnotVector, sparse A of shape (n+1, n)) such that
            coarse function i = sum_j A[j, i] * refined function j.
        """
        p, n, U = self.degree, self.n_functions, self.knots
        k = int(self.find_span(u))
        head = np.arange(0, k - p + 1)
        mid = np.arange(k - p + 1, k + 1)
        tail = np.arange(k + 1, n + 1)
        alpha = (u - U[mid]) / (U[mid + p] - U[mid])
        rows = np.concatenate([head, mid, mid, tail])
        cols = np.concatenate([head, mid, mid - 1, tail - 1])
        vals = np.concatenate([np.ones(head.size), alpha, 1.0 - alpha, np.ones(tail.size)])
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))
        refined = KnotVector(np.insert(U, k + 1, u), p)
        return refined, A

    def refine(self):
        """
        Dyadic refinement: insert the midpoint of every nonzero span, then
        scale the parameter by 2 (the owning space halves its spacing).

        Returns:
            (fine KnotVector, sparse matrix R of shape (n_fine, n_coarse)).
        """
        bp = self.breakpoints
        current = self
        R = sparse.identity(self.n_functions, format='csr')
        for u in 0.5 * (bp[:-1] + bp[1:]):
            current, A = current.insert_knot(u)
            R = A @ R
        R = R.tocsr()
        R.eliminate_zeros()
        return self.refined(), R

    def refined(self):
        """Knot vector of the dyadic refinement, without the coefficient matrix."""
        bp = self.breakpoints
        knots = np.sort(np.concatenate([self.knots, 0.5 * (bp[:-1] + bp[1:])]))
        return KnotVector(2.0 * knots, self.degree)


def _cox_de_boor(knots, p, span, xi):
    """
    Triangular Cox-de Boor table, vectorized over points.

    Returns:
        values (n, p+1) of degree p and, for p >= 1, values (n, p) of degree p-1
        on the same spans (used by the derivative formula).
    """
    n = xi.size
    N = np.zeros((n, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    lower = None
    for j in range(1, p + 1):
        if j == p:
            lower = N[:, :p].copy()
        left[:, j] = xi - knots[span + 1 - j]
        right[:, j] = knots[span + j] - xi
        saved = np.zeros(n)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N, lower


def _safe_ratio(num, den):
    out = np.zeros_like(num)
    mask = den > 0
    np.divide(num, den, out=out, where=mask)
    return out


def _first_derivatives(knots, p, span, lower):
    n = span.size
    ders = np.zeros((n, p + 1))
    if p == 0:
        return ders
    for k in range(p + 1):
        i = span - p + k
        if k >= 1:
            ders[:, k] += p * _safe_ratio(lower[:, k - 1], knots[i + p] - knots[i])
        if k <= p - 1:
            ders[:, k] -= p * _safe_ratio(lower[:, k], knots[i + p + 1] - knots[i + 1])
    return ders


# =====================================================
# TENSOR-PRODUCT SPACES
# =====================================================

@dataclass(frozen=True, eq=False)
class TensorBSplineSpace:
    """
    Bivariate tensor-product B-spline space on a Cartesian grid.

    Function index: ix + nx * iy (x fastest). Cell index: cx + ncx * cy.
    """
    kx: KnotVector
    ky: KnotVector
    origin: tuple = (0.0, 0.0)
    spacing: tuple = (1.0, 1.0)

    def __post_init__(self):
        for kv in (self.kx, self.ky):
            if kv.degree not in SUPPORTED_DEGREES:
                raise ConfigError(
                    f"Spline degree {kv.degree} not supported (allowed: {SUPPORTED_DEGREES})"
                )
        if min(self.spacing) <= 0:
            raise ConfigError(f"Grid spacing must be positive, got {self.spacing}")
        object.__setattr__(self, 'origin', tuple(float(v) for v in self.origin))
        object.__setattr__(self, 'spacing', tuple(float(v) for v in self.spacing))

    @classmethod
    def uniform(cls, n_cells, degree, origin=(0.0, 0.0), spacing=(1.0, 1.0)):
        """Open uniform space with n_cells = (ncx, ncy) and degree p or (px, py)."""
        px, py = (degree, degree) if np.isscalar(degree) else degree
        if px not in SUPPORTED_DEGREES or py not in SUPPORTED_DEGREES:
            raise ConfigError(f"Spline degree {degree} not supported (allowed: {SUPPORTED_DEGREES})")
        return cls(KnotVector.open_uniform(n_cells[0], px),
                   KnotVector.open_uniform(n_cells[1], py),
                   origin, spacing)

    # ---------- Sizes ----------

    @property
    def degrees(self):
        return self.kx.degree, self.ky.degree

    @property
    def shape(self):
        """Function counts per direction."""
        return self.kx.n_functions, self.ky.n_functions

    @property
    def n_functions(self):
        return self.kx.n_functions * self.ky.n_functions

    @property
    def n_cells(self):
        """Cell counts per direction."""
        return self.kx.n_spans, self.ky.n_spans

    @property
    def n_local(self):
        return (self.kx.degree + 1) * (self.ky.degree + 1)

    @property
    def bounds(self):
        """((xmin, ymin), (xmax, ymax)) in physical coordinates."""
        lo = self.to_physical(np.array([[self.kx.knots[0], self.ky.knots[0]]]))[0]
        hi = self.to_physical(np.array([[self.kx.knots[-1], self.ky.knots[-1]]]))[0]
        return tuple(lo), tuple(hi)

    # ---------- Geometry ----------

    def to_parametric(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        xi = (points[:, 0] - self.origin[0]) / self.spacing[0]
        eta = (points[:, 1] - self.origin[1]) / self.spacing[1]
        return xi, eta

    def to_physical(self, params):
        params = np.atleast_2d(params)
        return np.column_stack([
            self.origin[0] + self.spacing[0] * params[:, 0],
            self.origin[1] + self.spacing[1] * params[:, 1],
        ])

    def cell_bounds(self, cells=None):
        """Physical boxes [x0, y0, x1, y1] of the given flat cell indices (all cells by default)."""
        ncx, _ = self.n_cells
        if cells is None:
            cells = np.arange(ncx * self.n_cells[1])
        cells = np.asarray(cells)
        bx, by = self.kx.breakpoints, self.ky.breakpoints
        cx, cy = cells % ncx, cells // ncx
        lo = self.to_physical(np.column_stack([bx[cx], by[cy]]))
        hi = self.to_physical(np.column_stack([bx[cx + 1], by[cy + 1]]))
        return np.hstack([lo, hi])

    def function_support(self):
        """Inclusive cell ranges (cx0, cx1, cy0, cy1) of every function's support, each shape (n_functions,)."""
        fx0, fx1 = self.kx.support_spans()
        fy0, fy1 = self.ky.support_spans()
        nx, ny = self.shape
        ix = np.tile(np.arange(nx), ny)
        iy = np.repeat(np.arange(ny), nx)
        return fx0[ix], fx1[ix], fy0[iy], fy1[iy]

    def refine(self):
        """Dyadic refinement; see refinement_coefficients."""
        return refinement_coefficients(self)

    def refined(self):
        """The dyadically refined space alone (no coefficients)."""
        return TensorBSplineSpace(
            self.kx.refined(), self.ky.refined(), origin=self.origin,
            spacing=(0.5 * self.spacing[0], 0.5 * self.spacing[1]),
        )


# =====================================================
# OPERATIONS
# =====================================================

def eval_basis(space, x):
    """
    Evaluate the nonzero tensor-product functions at physical points.

    Args:
        space: TensorBSplineSpace
        x: point (2,) or points (n, 2)

    Returns:
        BasisValues with indices and values of shape (n, (px+1)(py+1)).
    """
    xi, eta = space.to_parametric(x)
    sx, vx = space.kx.evaluate(xi)
    sy, vy = space.ky.evaluate(eta)
    return BasisValues(_tensor_indices(space, sx, sy), _tensor_product(vx, vy))


def eval_gradients(space, x):
    """
    Evaluate gradients (physical coordinates) of the nonzero functions.

    Returns:
        BasisGradients with indices (n, n_local) and gradients (n, n_local, 2).
    """
    xi, eta = space.to_parametric(x)
    sx, vx, dx = space.kx.derivatives(xi)
    sy, vy, dy = space.ky.derivatives(eta)
    gx = _tensor_product(dx, vy) / space.spacing[0]
    gy = _tensor_product(vx, dy) / space.spacing[1]
    return BasisGradients(_tensor_indices(space, sx, sy), np.stack([gx, gy], axis=-1))


def basis_matrix(space, x, gradient=False):
    """
    Sparse evaluation matrix S (n_points x n_functions), S[k, i] = B_i(x_k).
    With gradient=True returns the pair (dS/dx, dS/dy).
    """
    x = np.atleast_2d(x)
    n = x.shape[0]
    if gradient:
        idx, grads = eval_gradients(space, x)
        rows = np.repeat(np.arange(n), idx.shape[1])
        return tuple(
            sparse.csr_matrix((grads[:, :, m].ravel(), (rows, idx.ravel())), shape=(n, space.n_functions))
            for m in range(2)
        )
    idx, vals = eval_basis(space, x)
    rows = np.repeat(np.arange(n), idx.shape[1])
    return sparse.csr_matrix((vals.ravel(), (rows, idx.ravel())), shape=(n, space.n_functions))


def refinement_coefficients(coarse):
    """
    Dyadic refinement of a tensor-product space.

    Returns:
        (fine space, R) with R a sparse (n_fine x n_coarse) matrix; column i holds
        the coefficients c such that B_i = sum_j c_j B_fine_j.
    """
    fx, Rx = coarse.kx.refine()
    fy, Ry = coarse.ky.refine()
    fine = TensorBSplineSpace(
        fx, fy, origin=coarse.origin,
        spacing=(0.5 * coarse.spacing[0], 0.5 * coarse.spacing[1]),
    )
    # x-fastest flat ordering -> Kronecker product with the y factor outside
    R = sparse.kron(Ry, Rx, format='csc')
    logger.debug(f"Refined {coarse.n_cells} -> {fine.n_cells} cells, {coarse.n_functions} -> {fine.n_functions} functions")
    return fine, R


def _tensor_indices(space, sx, sy):
    px, py = space.degrees
    nx = space.shape[0]
    ix = sx[:, None] - px + np.arange(px + 1)[None, :]
    iy = sy[:, None] - py + np.arange(py + 1)[None, :]
    return (ix[:, None, :] + nx * iy[:, :, None]).reshape(sx.size, -1)


def _tensor_product(vx, vy):
    return (vx[:, None, :] * vy[:, :, None]).reshape(vx.shape[0], -1)
