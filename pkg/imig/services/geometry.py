"""
imig - Level Set Geometry
==========================
Level set fields discretized on bilinear background grids, characteristic
functions, phase indices and the phase -> material map.

Each field keeps its nodal grid (the bilinear interpolant phi^h) and, when it
was built from a closed-form function, that function as well. Phase queries
use phi^h; geometry construction samples the closed form at the nodes of the
(finer) decomposition cells when available, so that foreground refinement
resolves the geometry better.

LSF grid file format (plain text):
    nx ny x0 y0 dx dy phi_t
    ny rows of nx nodal values, row-major from y0 upwards
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from imig.exceptions import ConfigError, InputError
from imig.services.spline import TensorBSplineSpace, basis_matrix

logger = logging.getLogger(__name__)

VOID = 0


# =====================================================
# LEVEL SET FIELDS
# =====================================================

@dataclass(frozen=True, eq=False)
class LevelSetField:
    """Nodal level set values on a uniform grid, values[iy, ix]."""
    values: np.ndarray
    origin: tuple = (0.0, 0.0)
    spacing: tuple = (1.0, 1.0)
    iso: float = 0.0
    name: str = ''
    analytic: object = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or min(values.shape) < 2:
            raise InputError(f"Level set '{self.name}' needs a 2D grid of at least 2x2 nodes")
        if not np.all(np.isfinite(values)):
            raise InputError(f"Level set '{self.name}' has non-finite nodal values")
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'origin', tuple(float(v) for v in self.origin))
        object.__setattr__(self, 'spacing', tuple(float(v) for v in self.spacing))

    @property
    def shape(self):
        """Node counts (nx, ny)."""
        return self.values.shape[1], self.values.shape[0]

    @cached_property
    def space(self):
        """The bilinear space whose coefficients are the nodal values."""
        nx, ny = self.shape
        return TensorBSplineSpace.uniform((nx - 1, ny - 1), 1, self.origin, self.spacing)

    @property
    def value_range(self):
        return float(self.values.max() - self.values.min())

    def snap_tolerance(self, factor):
        """Absolute distance to the iso-level below which a value counts as on it."""
        return factor * max(self.value_range, np.finfo(float).tiny)

    def nodes(self):
        nx, ny = self.shape
        X, Y = np.meshgrid(
            self.origin[0] + self.spacing[0] * np.arange(nx),
            self.origin[1] + self.spacing[1] * np.arange(ny),
            indexing='xy',
        )
        return np.column_stack([X.ravel(), Y.ravel()])

    def evaluate(self, points):
        """Bilinear interpolant phi^h at points (n, 2)."""
        return basis_matrix(self.space, points) @ self.values.ravel()

    def sample(self, points):
        """Closed-form values when available, otherwise phi^h."""
        points = np.atleast_2d(points)
        if self.analytic is None:
            return self.evaluate(points)
        values = np.asarray(self.analytic(points[:, 0], points[:, 1]), dtype=float)
        return np.broadcast_to(values, (points.shape[0],)).copy()

    # ---------- Direct bilinear evaluation ----------

    def _locate(self, points):
        """Grid cell (ix, iy) and local coordinates in [0, 1] of points (n, 2); no domain check."""
        nx, ny = self.shape
        s = (points - np.asarray(self.origin)) / np.asarray(self.spacing)
        ix = np.clip(np.floor(s[:, 0]).astype(np.int64), 0, nx - 2)
        iy = np.clip(np.floor(s[:, 1]).astype(np.int64), 0, ny - 2)
        return ix, iy, s[:, 0] - ix, s[:, 1] - iy

    def _corners(self, ix, iy):
        v = self.values
        return v[iy, ix], v[iy, ix + 1], v[iy + 1, ix], v[iy + 1, ix + 1]

    def interpolate(self, points):
        """phi^h from the four nodal values of the enclosing grid cell (points clamped onto the grid)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ix, iy, u, v = self._locate(points)
        w00, w10, w01, w11 = self._corners(ix, iy)
        return w00 + (w10 - w00) * u + (w01 - w00) * v + (w00 - w10 - w01 + w11) * u * v

    def segment_root(self, a, b, value_a=None, value_b=None):
        """
        Parameter t in [0, 1] where phi^h reaches the iso-level on the segment a -> b.

        phi^h restricted to the segment is a quadratic on every grid cell the
        segment crosses, so the root is found in closed form on the piece that
        changes sign. `value_a` and `value_b` override the end values (snapped
        vertices); the difference is spread linearly along the segment.

        Returns:
            t, or None when the end values do not bracket the iso-level.
        """
        a = np.asarray(a, dtype=float)
        d = np.asarray(b, dtype=float) - a
        ts = [np.array([0.0, 1.0])]
        for axis in (0, 1):
            if d[axis] != 0.0:
                lines = self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])
                t = (lines - a[axis]) / d[axis]
                ts.append(t[(t > 0.0) & (t < 1.0)])
        ts = np.unique(np.concatenate(ts))
        phi = self.interpolate(a + ts[:, None] * d)
        end_a = phi[0] if value_a is None else float(value_a)
        end_b = phi[-1] if value_b is None else float(value_b)
        f = phi + (1.0 - ts) * (end_a - phi[0]) + ts * (end_b - phi[-1]) - self.iso
        f[0], f[-1] = end_a - self.iso, end_b - self.iso
        if f[0] * f[-1] > 0.0 or (f[0] == 0.0 and f[-1] == 0.0):
            return None

        for i in range(ts.size - 1):
            if f[i] == 0.0:
                return float(ts[i])
            if f[i] * f[i + 1] > 0.0:
                continue
            t0, t1 = ts[i], ts[i + 1]
            mid = a + 0.5 * (t0 + t1) * d
            ix, iy, _, _ = self._locate(mid[None, :])
            w00, w10, w01, w11 = (float(w[0]) for w in self._corners(ix, iy))
            # only the twist term of the bilinear survives as curvature along a line
            du, dv = (t1 - t0) * d / np.asarray(self.spacing)
            curvature = (w00 - w10 - w01 + w11) * du * dv
            return float(t0 + (t1 - t0) * _unit_root(f[i], f[i + 1], curvature))
        return 1.0


def _unit_root(f0, f1, a2):
    """Root in [0, 1] of f0 + (f1 - f0 - a2) s + a2 s^2, given f0 * f1 <= 0."""
    if f1 == 0.0:
        return 1.0
    a1 = f1 - f0 - a2
    if a2 == 0.0:
        return f0 / (f0 - f1)
    disc = max(a1 * a1 - 4.0 * a2 * f0, 0.0)
    q = -0.5 * (a1 + np.copysign(np.sqrt(disc), a1))
    candidates = [q / a2]
    if q != 0.0:
        candidates.append(f0 / q)
    best = min(candidates, key=lambda s: max(-s, s - 1.0, 0.0))
    return min(max(best, 0.0), 1.0)


def cell_level_set(bounds, corner_values, iso=0.0, name=''):
    """
    Level set on a single rectangle [x0, y0, x1, y1] from its corner values at
    (x0,y0), (x1,y0), (x1,y1), (x0,y1): the bilinear interpolant of one
    decomposition cell.
    """
    x0, y0, x1, y1 = (float(v) for v in bounds)
    v = np.asarray(corner_values, dtype=float)
    return LevelSetField(np.array([[v[0], v[1]], [v[3], v[2]]]), (x0, y0), (x1 - x0, y1 - y0), iso, name)


def discretize_lsf(analytic, space, iso=0.0, name=''):
    """
    Level set field whose coefficients are the nodal values of `analytic` on a
    bilinear space.

    Raises:
        ConfigError: the space is not bilinear
        InputError: a nodal value is not finite
    """
    if space.degrees != (1, 1):
        raise ConfigError(f"Level sets are discretized on bilinear spaces, got degrees {space.degrees}")
    nx, ny = space.shape
    xs = space.origin[0] + space.spacing[0] * space.kx.breakpoints
    ys = space.origin[1] + space.spacing[1] * space.ky.breakpoints
    X, Y = np.meshgrid(xs, ys, indexing='xy')
    values = np.asarray(analytic(X, Y), dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise InputError(
            f"Level set '{name}' is not finite at node ({X[tuple(bad)]:.6g}, {Y[tuple(bad)]:.6g})"
        )
    return LevelSetField(values.reshape(ny, nx), space.origin, space.spacing, iso, name, analytic)


def phase_at(fields, x, sampled=False):
    """
    Phase index sum_j 2^(j-1) f_j(x), with f_j = 1 where phi_j >= phi_t.

    Args:
        fields: LevelSetField list, j = 1..n in list order
        x: point (2,) or points (n, 2)
        sampled: use each field's closed form when available instead of phi^h
    """
    points = np.atleast_2d(np.asarray(x, dtype=float))
    phase = np.zeros(points.shape[0], dtype=np.int64)
    for j, lsf in enumerate(fields):
        values = lsf.sample(points) if sampled else lsf.evaluate(points)
        phase += (values >= lsf.iso).astype(np.int64) << j
    return phase


# =====================================================
# PHASES AND MATERIALS
# =====================================================

@dataclass(frozen=True, eq=False)
class PhaseConfig:
    """
    Map from phase index to material. Material ids are 1-based positions in
    `materials`; id 0 is void. Phases missing from the map take `default`
    (a material name, or None for void).
    """
    n_fields: int
    phase_map: dict
    materials: tuple
    default: str = None

    def __post_init__(self):
        materials = tuple(self.materials)
        object.__setattr__(self, 'materials', materials)
        names = [m.name for m in materials]
        if len(set(names)) != len(names):
            raise ConfigError(f"Duplicate material names in {names}")
        n_phases = 2 ** self.n_fields
        table = np.full(n_phases, self._material_id(self.default, names), dtype=np.int64)
        for phase, name in self.phase_map.items():
            if not 0 <= int(phase) < n_phases:
                raise ConfigError(f"Phase {phase} outside [0, {n_phases}) for {self.n_fields} level sets")
            table[int(phase)] = self._material_id(name, names)
        if not np.any(table != VOID):
            raise ConfigError("Phase map assigns no phase to a material")
        object.__setattr__(self, 'table', table)

    @staticmethod
    def _material_id(name, names):
        if name is None:
            return VOID
        if name not in names:
            raise ConfigError(f"Phase map names unknown material {name!r}")
        return names.index(name) + 1

    @property
    def n_materials(self):
        return len(self.materials)

    def material_of(self, phase):
        return self.table[np.asarray(phase, dtype=np.int64)]

    def material(self, material_id):
        return self.materials[int(material_id) - 1]

    def material_id(self, name):
        return self._material_id(name, [m.name for m in self.materials])

    def material_at(self, fields, x, sampled=False):
        if len(fields) != self.n_fields:
            raise ConfigError(f"Phase map expects {self.n_fields} level sets, got {len(fields)}")
        return self.material_of(phase_at(fields, x, sampled=sampled))


# =====================================================
# LSF GRID FILES
# =====================================================

def write_lsf_grid(path, lsf):
    """Write a field in the plain-text grid format; values round-trip exactly."""
    nx, ny = lsf.shape
    header = ' '.join([str(nx), str(ny)] + [repr(float(v)) for v in (*lsf.origin, *lsf.spacing, lsf.iso)])
    np.savetxt(path, lsf.values, fmt='%.17g', header=header, comments='')
    logger.info(f"Wrote {nx}x{ny} level set grid to {path}")


def read_lsf_grid(path, name='', analytic=None):
    """
    Read a level set grid file.

    Raises:
        InputError: malformed header, wrong value count or non-finite values
    """
    try:
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) != 7:
                raise InputError(f"{path}: header must be 'nx ny x0 y0 dx dy phi_t'")
            nx, ny = int(header[0]), int(header[1])
            x0, y0, dx, dy, iso = (float(v) for v in header[2:])
            values = np.loadtxt(fh, dtype=float, ndmin=2)
    except FileNotFoundError:
        raise InputError(f"Level set grid file not found: {path}")
    except ValueError as exc:
        raise InputError(f"{path}: {exc}")
    if values.shape != (ny, nx):
        raise InputError(f"{path}: expected {ny} rows of {nx} values, got shape {values.shape}")
    if dx <= 0 or dy <= 0:
        raise InputError(f"{path}: grid spacing must be positive")
    logger.info(f"Read {nx}x{ny} level set grid from {path}")
    return LevelSetField(values, (x0, y0), (dx, dy), iso, name or str(path), analytic)


def inclusion_field(discs, origin, spacing, shape, iso=0.0, name='inclusions'):
    """
    Union-of-discs level set, positive inside any disc:
        phi(x) = max_k (R_k - |x - c_k|)

    Args:
        discs: iterable of (cx, cy, radius)
        shape: node counts (nx, ny)
    """
    discs = np.asarray(discs, dtype=float).reshape(-1, 3)

    def phi(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        dist = np.stack([r - np.hypot(x - cx, y - cy) for cx, cy, r in discs])
        return dist.max(axis=0)

    nx, ny = shape
    space = TensorBSplineSpace.uniform((nx - 1, ny - 1), 1, origin, spacing)
    return discretize_lsf(phi, space, iso=iso, name=name)
