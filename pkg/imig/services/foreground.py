"""
imig - Foreground Mesh
=======================
Boundary-fitted integration mesh built on the cells of a hierarchically
refined decomposition mesh:

1. decomposition cells not crossed by any level set stay quads;
2. crossed cells are split into a four-triangle fan around their centre, and
   every triangle is cut by each crossing level set in turn with the 0- and
   2-intersection (or vertex-touching) templates;
3. sub-cells are classified by phase at their centroid, void cells dropped;
4. interface facets (material i | material j) and boundary facets (material |
   void, or the embedding box) are extracted with unit normals.

Cut points are roots of phi^h: for a grid-only level set that is the field's own
grid interpolant; a closed-form level set is discretized on each decomposition
cell (nodal values at its corners), so foreground refinement refines phi^h too.

Hanging nodes are allowed: neighbours across decomposition cells are found by
overlapping collinear sides, not shared vertices.

The foreground basis is discontinuous Lagrange of degree q on every cell.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse

from imig.config import Config
from imig.exceptions import BasisError, ConfigError, DegenerateEdgeError, GeometryError
from imig.services.geometry import VOID, cell_level_set
from imig.services.hierarchy import (
    LevelSequence, active_mesh, children_mask, dilate, interface_cells, parent_mask,
)
from imig.services.spline import TensorBSplineSpace
from imig.utils.decorators import log_stage
from imig.utils.elements import affine_maps, reference_element
from imig.utils.quadrature import cell_rule, line_rule
from imig.utils.segments import line_keys, overlapping_segments

logger = logging.getLogger(__name__)

MIN_AREA_RATIO = 1e-15
VOLUME_CHUNK = 4096
BOX_TAGS = ('box_bottom', 'box_right', 'box_top', 'box_left')

# Pre-triangulation fan around the added centre node (index 4), counter-clockwise
FAN = ((0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4))


# =====================================================
# DECOMPOSITION MESH
# =====================================================

@dataclass(frozen=True, eq=False)
class DecompositionMesh:
    """Active cells of the union of the field hierarchies plus foreground-only levels."""
    sequence: LevelSequence
    mesh: object  # HierMesh

    @property
    def n_cells(self):
        return self.mesh.n_cells

    @property
    def bounds(self):
        return self.mesh.bounds

    @property
    def box(self):
        return self.sequence.levels[0].bounds

    @property
    def cell_sizes(self):
        b = self.mesh.bounds
        return np.minimum(b[:, 2] - b[:, 0], b[:, 3] - b[:, 1])


@log_stage
def build_decomposition(n_cells, origin, spacing, field_sequences=(), fields=(), phases=None,
                        fg_depth=0, fg_ring=Config.FOREGROUND_RING,
                        samples=Config.REFINEMENT_SAMPLES, max_depth=Config.MAX_DEPTH):
    """
    Decomposition mesh: Omega_D^l is the union of every field's Omega^l, refined
    `fg_depth` more times around the interfaces.

    Args:
        n_cells, origin, spacing: the shared level-0 background grid
        field_sequences: LevelSequence of each field space (same level-0 grid)
        fields, phases: level sets and phase map, needed when fg_depth > 0
        fg_depth: foreground-only refinement levels
        fg_ring: dilation ring of the foreground-only marks
    """
    base = TensorBSplineSpace.uniform(n_cells, 1, origin, spacing)
    for seq in field_sequences:
        if tuple(seq.levels[0].n_cells) != tuple(base.n_cells):
            raise ConfigError(f"Field grid {seq.levels[0].n_cells} differs from decomposition grid {base.n_cells}")
    if fg_depth > 0 and (phases is None or not fields):
        raise ConfigError("Foreground refinement needs level sets and a phase map")

    depth = max([seq.depth for seq in field_sequences] + [1]) + fg_depth
    if depth > max_depth:
        raise ConfigError(f"Decomposition depth {depth} exceeds the maximum of {max_depth}")

    def classify(points):
        return phases.material_at(fields, points, sampled=True)

    space = base
    current = np.ones(int(np.prod(base.n_cells)), dtype=bool)
    subdomains = []
    for l in range(depth - 1):
        marked = np.zeros_like(current)
        for seq in field_sequences:
            if l + 1 < seq.depth:
                marked |= parent_mask(seq.subdomains[l + 1], seq.levels[l + 1].n_cells)
        if fg_depth > 0:
            flagged = interface_cells(space, np.flatnonzero(current), classify, samples)
            marked |= dilate(flagged, space.n_cells, fg_ring)
        marked &= current
        if not marked.any():
            break
        current = children_mask(marked, space.n_cells)
        subdomains.append(current)
        space = space.refined()

    seq = LevelSequence.build(base, subdomains, max_depth=max_depth)
    decomposition = DecompositionMesh(seq, active_mesh(seq))
    logger.info(
        f"Decomposition mesh: {decomposition.n_cells} cells on {seq.depth} levels "
        f"{decomposition.mesh.level_counts(seq.depth).tolist()}"
    )
    return decomposition


# =====================================================
# CUT-CELL TEMPLATES
# =====================================================

def edge_intersection(phi_a, phi_b, phi_t=0.0):
    """
    Parameter t in (0, 1) where the linear interpolant between phi_a and phi_b
    reaches phi_t, or None without a strict sign change.

    Raises:
        DegenerateEdgeError: both endpoints lie exactly on the iso-level
    """
    if phi_a == phi_t and phi_b == phi_t:
        raise DegenerateEdgeError(f"Edge lies on the iso-level {phi_t}")
    if (phi_a - phi_t) * (phi_b - phi_t) < 0:
        return (phi_t - phi_a) / (phi_b - phi_a)
    return None


class CellSplit(NamedTuple):
    """Sub-cells of one decomposition cell. `cells` hold local point ids, CCW."""
    points: np.ndarray
    values: np.ndarray
    cells: list
    phases: np.ndarray


def snap_values(values, isos, tolerances):
    """Set values within tolerance of their iso-level exactly onto it."""
    values = np.array(values, dtype=float, copy=True)
    isos = np.broadcast_to(np.asarray(isos, dtype=float), values.shape)
    near = np.abs(values - isos) < np.broadcast_to(np.asarray(tolerances, dtype=float), values.shape)
    values[near] = isos[near]
    return values


def _crossed(values, isos):
    """Level sets with a strict sign change among the rows of `values`."""
    return np.any(values > isos, axis=0) & np.any(values < isos, axis=0)


def triangulate_cell(bounds, corner_values, isos=None, tolerances=None, fields=None):
    """
    Split a rectangular cell along the zero sets of its level sets.

    Every added point is a root of phi^h along its segment: linear on the cell
    edges, quadratic along the fan spokes and across the sub-triangles.

    Args:
        bounds: [x0, y0, x1, y1]
        corner_values: (4, n_lsf) values at (x0,y0), (x1,y0), (x1,y1), (x0,y1)
        isos: iso-level per level set (default 0)
        tolerances: snapping distance per level set (default: no snapping)
        fields: LevelSetField per level set describing phi^h inside the cell
            (default: the bilinear interpolant of the corner values)

    Returns:
        CellSplit with the quad itself when no level set changes sign strictly,
        otherwise the triangles of the fan cut by every crossing level set.
    """
    x0, y0, x1, y1 = (float(v) for v in bounds)
    values = np.atleast_2d(np.asarray(corner_values, dtype=float))
    n_lsf = values.shape[1]
    isos = np.zeros(n_lsf) if isos is None else np.broadcast_to(np.asarray(isos, dtype=float), (n_lsf,))
    tolerances = np.zeros(n_lsf) if tolerances is None else np.broadcast_to(tolerances, (n_lsf,))
    values = snap_values(values, isos, tolerances)
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    crossing = np.flatnonzero(_crossed(values, isos))
    if crossing.size == 0:
        phase = _phase(values.mean(axis=0, keepdims=True), isos)
        return CellSplit(corners, values, [(0, 1, 2, 3)], phase)

    if fields is None:
        fields = [cell_level_set(bounds, values[:, k], isos[k]) for k in range(n_lsf)]

    def values_at(p, *ends):
        v = np.array([f.interpolate(p[None, :])[0] for f in fields])
        if ends:
            v = _keep_sides(v, *ends, isos)
        return snap_values(v, isos, tolerances)

    centre = corners.mean(axis=0)
    points = [p for p in corners] + [centre]
    vals = [v for v in values] + [values_at(centre)]
    cache = {}

    def split_point(a, b, k):
        key = (min(a, b), max(a, b), k)
        if key not in cache:
            # canonical endpoint order so shared edges of neighbours give identical points
            if tuple(points[a]) > tuple(points[b]):
                a, b = b, a
            if edge_intersection(vals[a][k], vals[b][k], isos[k]) is None:
                raise GeometryError(
                    f"Cell {bounds}: no crossing of level set {k} between points {a} and {b}"
                )
            t = fields[k].segment_root(points[a], points[b], vals[a][k], vals[b][k])
            p = points[a] + t * (points[b] - points[a])
            v = values_at(p, vals[a], vals[b])
            v[k] = isos[k]
            points.append(p)
            vals.append(v)
            cache[key] = len(points) - 1
        return cache[key]

    def cut(tri, k):
        s = [int(np.sign(vals[i][k] - isos[k])) for i in tri]
        if not (1 in s and -1 in s):
            return [tri]
        zeros = s.count(0)
        if zeros == 0:
            lone = next(i for i in range(3) if s.count(s[i]) == 1)
            l, a, b = tri[lone:] + tri[:lone]
            xa, xb = split_point(l, a, k), split_point(l, b, k)
            d_xa_b = np.sum((points[xa] - points[b]) ** 2)
            d_a_xb = np.sum((points[a] - points[xb]) ** 2)
            if d_xa_b < d_a_xb or (d_xa_b == d_a_xb and min(xa, b) <= min(a, xb)):
                return [(l, xa, xb), (xa, a, b), (xa, b, xb)]
            return [(l, xa, xb), (xa, a, xb), (a, b, xb)]
        if zeros == 1:
            z = s.index(0)
            zv, a, b = tri[z:] + tri[:z]
            x = split_point(a, b, k)
            return [(zv, a, x), (zv, x, b)]
        raise GeometryError(f"Cell {bounds}: unmatched template for signs {s} of level set {k}")

    triangles = [tuple(t) for t in FAN]
    for k in crossing:
        triangles = [piece for tri in triangles for piece in cut(tri, k)]

    points = np.array(points)
    vals = np.array(vals)
    tris = np.array(triangles, dtype=int)
    area = _triangle_areas(points[tris])
    keep = area > MIN_AREA_RATIO * (x1 - x0) * (y1 - y0)
    tris = tris[keep]

    phase = _phase(vals[tris].mean(axis=1), isos)
    _check_consistency(bounds, vals, tris, phase, isos, tolerances)
    return CellSplit(points, vals, [tuple(t) for t in tris], phase)


def _keep_sides(v, va, vb, isos):
    """A point on the segment a-b stays on the closed side of every level set that a and b share."""
    sa, sb, sv = np.sign(va - isos), np.sign(vb - isos), np.sign(v - isos)
    on_both = (sa == 0) & (sb == 0)
    leaves = (sa * sb >= 0) & ((sa + sb) * sv < 0)
    v = v.copy()
    v[on_both | leaves] = isos[on_both | leaves]
    return v


def _phase(centroid_values, isos):
    bits = (centroid_values >= isos).astype(np.int64)
    return (bits << np.arange(bits.shape[1])).sum(axis=1)


def _triangle_areas(coords):
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _check_consistency(bounds, vals, tris, phase, isos, tolerances):
    """Every vertex must lie on the centroid's side of every level set (within tolerance)."""
    inside = ((phase[:, None] >> np.arange(isos.size)) & 1).astype(bool)  # (t, n_lsf)
    v = vals[tris]  # (t, 3, n_lsf)
    slack = np.maximum(tolerances, 1e-12 * np.maximum(1.0, np.abs(isos)))
    wrong = np.where(inside[:, None, :], v < isos - slack, v > isos + slack)
    if np.any(wrong):
        t, corner, k = np.argwhere(wrong)[0]
        raise GeometryError(
            f"Cell {list(bounds)}: sub-cell {t} vertex {corner} disagrees with its centroid "
            f"phase {phase[t]} for level set {k} (value {v[t, corner, k]:.6g})"
        )


# =====================================================
# FOREGROUND MESH
# =====================================================

@dataclass(frozen=True, eq=False)
class InterfaceFacets:
    """Facets between materials; cells[:, 0] holds the lower material id, normals point out of it."""
    cells: np.ndarray      # (n, 2)
    points: np.ndarray     # (n, 2, 2)
    normals: np.ndarray    # (n, 2)
    materials: np.ndarray  # (n, 2)
    lsf: np.ndarray        # (n,) closest level set at the facet midpoint

    @property
    def n_facets(self):
        return self.cells.shape[0]

    @property
    def lengths(self):
        return np.linalg.norm(self.points[:, 1] - self.points[:, 0], axis=1)

    def flipped(self):
        return InterfaceFacets(self.cells[:, ::-1], self.points, -self.normals, self.materials[:, ::-1], self.lsf)


@dataclass(frozen=True, eq=False)
class BoundaryFacets:
    """Facets on the domain boundary with outward normals and tags."""
    cells: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    tags: np.ndarray

    @property
    def n_facets(self):
        return self.cells.shape[0]

    @property
    def lengths(self):
        return np.linalg.norm(self.points[:, 1] - self.points[:, 0], axis=1)

    def select(self, tags):
        """Facet indices carrying any of the given tags."""
        return np.flatnonzero(np.isin(self.tags, list(tags)))


@dataclass(frozen=True, eq=False)
class ForegroundMesh:
    """Mixed triangle/quad integration mesh; vertices padded with -1 for triangles."""
    points: np.ndarray
    cell_vertices: np.ndarray
    cell_type: np.ndarray   # number of vertices, 3 or 4
    material: np.ndarray
    phase: np.ndarray
    level: np.ndarray
    parent: np.ndarray      # decomposition cell
    cut: np.ndarray
    area: np.ndarray
    h: np.ndarray
    interfaces: InterfaceFacets
    boundary: BoundaryFacets
    adjacency: sparse.csr_matrix
    touches_interface: np.ndarray
    box: tuple
    tag_names: tuple = ()

    @property
    def n_cells(self):
        return self.cell_type.size

    def vertices(self, cells):
        """Vertex coordinates (k, nv, 2) of cells that all have the same type."""
        cells = np.asarray(cells)
        nv = int(self.cell_type[cells[0]]) if cells.size else 4
        return self.points[self.cell_vertices[cells, :nv]]

    @property
    def centroids(self):
        out = np.empty((self.n_cells, 2))
        for nv in (3, 4):
            sel = np.flatnonzero(self.cell_type == nv)
            if sel.size:
                out[sel] = self.vertices(sel).mean(axis=1)
        return out

    def material_areas(self):
        """Total area per material id (index 0 unused)."""
        return np.bincount(self.material, weights=self.area)


@log_stage
def build_foreground_mesh(decomp, fields, phases, snap=Config.SNAP_TOLERANCE, h_cap=Config.H_CAP_FACTOR):
    """
    Triangulate the cut cells of a decomposition mesh and extract facets.

    Args:
        decomp: DecompositionMesh
        fields: LevelSetField list (phase bit j = field j)
        phases: PhaseConfig
        snap: snapping tolerance relative to each field's grid value range
        h_cap: lower bound of cell h relative to its decomposition cell size
    """
    if len(fields) != phases.n_fields:
        raise ConfigError(f"Phase map expects {phases.n_fields} level sets, got {len(fields)}")
    bounds = decomp.bounds
    n_dec = bounds.shape[0]
    isos = np.array([f.iso for f in fields], dtype=float)
    tolerances = np.array([f.snap_tolerance(snap) for f in fields])

    corners = np.stack([
        bounds[:, [0, 1]], bounds[:, [2, 1]], bounds[:, [2, 3]], bounds[:, [0, 3]],
    ], axis=1)  # (n, 4, 2)
    flat = corners.reshape(-1, 2)
    values = np.stack([f.sample(flat) for f in fields], axis=-1).reshape(n_dec, 4, len(fields))
    values = snap_values(values, isos, tolerances)
    cut = np.any(np.any(values > isos, axis=1) & np.any(values < isos, axis=1), axis=1)
    uncut = np.flatnonzero(~cut)
    cut_cells = np.flatnonzero(cut)
    logger.info(f"{cut_cells.size} of {n_dec} decomposition cells are cut")

    # ---------- Uncut cells: quads ----------
    q_points = corners[uncut].reshape(-1, 2)
    q_vertices = np.full((uncut.size, 4), -1, dtype=np.int64)
    q_vertices[:, :] = np.arange(uncut.size * 4).reshape(-1, 4)
    q_phase = _phase(values[uncut].mean(axis=1), isos)

    points = [q_points]
    cell_vertices = [q_vertices]
    cell_phase = [q_phase]
    cell_parent = [uncut]
    offset = q_points.shape[0]

    # ---------- Cut cells: templates ----------
    for c in cut_cells:
        # closed-form fields are discretized on the decomposition cell itself
        cell_fields = [
            f if f.analytic is None else cell_level_set(bounds[c], values[c, :, k], f.iso, f.name)
            for k, f in enumerate(fields)
        ]
        split = triangulate_cell(bounds[c], values[c], isos, tolerances, fields=cell_fields)
        tris = np.array(split.cells, dtype=np.int64)
        padded = np.full((tris.shape[0], 4), -1, dtype=np.int64)
        padded[:, :3] = tris + offset
        points.append(split.points)
        cell_vertices.append(padded)
        cell_phase.append(split.phases)
        cell_parent.append(np.full(tris.shape[0], c))
        offset += split.points.shape[0]

    points = np.vstack(points)
    cell_vertices = np.vstack(cell_vertices)
    phase = np.concatenate(cell_phase)
    parent = np.concatenate(cell_parent)
    cell_type = np.where(cell_vertices[:, 3] < 0, 3, 4)
    material = phases.material_of(phase)

    area = _cell_areas(points, cell_vertices, cell_type)
    centroids = _cell_centroids(points, cell_vertices, cell_type)
    box = decomp.box

    # ---------- Sides, neighbours and facets ----------
    pairs, box_sides = _match_sides(points, cell_vertices, cell_type, parent, bounds, box,
                                    min(decomp.sequence.finest.spacing))
    cell_a, cell_b, seg = pairs
    mat_a, mat_b = material[cell_a], material[cell_b]

    same = (mat_a == mat_b) & (mat_a != VOID)
    adjacency_pairs = np.column_stack([cell_a[same], cell_b[same]])

    between = (mat_a != mat_b) & (mat_a != VOID) & (mat_b != VOID)
    lo_first = mat_a[between] < mat_b[between]
    ifc_i = np.where(lo_first, cell_a[between], cell_b[between])
    ifc_j = np.where(lo_first, cell_b[between], cell_a[between])
    ifc_seg = seg[between]

    to_void = (mat_a == VOID) ^ (mat_b == VOID)
    bnd_cell = np.where(mat_a[to_void] != VOID, cell_a[to_void], cell_b[to_void])
    bnd_seg = seg[to_void]

    box_cell, box_seg, box_tag = box_sides
    keep_box = material[box_cell] != VOID
    box_cell, box_seg, box_tag = box_cell[keep_box], box_seg[keep_box], box_tag[keep_box]

    tag_names = tuple(f.name or f"lsf{k}" for k, f in enumerate(fields))
    lsf_ifc = _closest_lsf(fields, ifc_seg)
    lsf_bnd = _closest_lsf(fields, bnd_seg)

    # ---------- Drop void cells and renumber ----------
    keep = material != VOID
    new_id = np.full(keep.size, -1, dtype=np.int64)
    new_id[keep] = np.arange(int(keep.sum()))
    used = np.unique(cell_vertices[keep][cell_vertices[keep] >= 0])
    point_id = np.full(points.shape[0], -1, dtype=np.int64)
    point_id[used] = np.arange(used.size)
    verts = cell_vertices[keep]
    verts = np.where(verts >= 0, point_id[np.maximum(verts, 0)], -1)

    n_cells = int(keep.sum())
    interfaces = InterfaceFacets(
        cells=np.column_stack([new_id[ifc_i], new_id[ifc_j]]).reshape(-1, 2),
        points=ifc_seg.reshape(-1, 2, 2),
        normals=_normals(ifc_seg, centroids[ifc_i]).reshape(-1, 2),
        materials=np.column_stack([material[ifc_i], material[ifc_j]]).reshape(-1, 2),
        lsf=lsf_ifc,
    )
    boundary = BoundaryFacets(
        cells=np.concatenate([new_id[bnd_cell], new_id[box_cell]]),
        points=np.concatenate([bnd_seg.reshape(-1, 2, 2), box_seg.reshape(-1, 2, 2)]),
        normals=np.concatenate([
            _normals(bnd_seg, centroids[bnd_cell]).reshape(-1, 2),
            _box_normals(box_tag).reshape(-1, 2),
        ]),
        tags=np.concatenate([
            np.array([tag_names[k] for k in lsf_bnd], dtype=object),
            np.array(box_tag, dtype=object),
        ]),
    )

    adj = new_id[adjacency_pairs].reshape(-1, 2)
    adjacency = sparse.coo_matrix(
        (np.ones(2 * adj.shape[0]), (np.concatenate([adj[:, 0], adj[:, 1]]), np.concatenate([adj[:, 1], adj[:, 0]]))),
        shape=(n_cells, n_cells),
    ).tocsr()
    adjacency.data[:] = 1.0

    touches = np.zeros(n_cells, dtype=bool)
    touches[interfaces.cells.ravel()] = True
    touches[new_id[bnd_cell]] = True

    dec_size = decomp.cell_sizes[parent[keep]]
    raw_h = np.sqrt(area[keep])
    floor = h_cap * dec_size
    h = np.maximum(raw_h, floor)
    n_capped = int(np.count_nonzero(raw_h < floor))
    if n_capped:
        logger.warning(f"Cell size floor of {h_cap:g} x decomposition cell size binds on {n_capped} cells")

    mesh = ForegroundMesh(
        points=points[used],
        cell_vertices=verts,
        cell_type=cell_type[keep],
        material=material[keep],
        phase=phase[keep],
        level=decomp.mesh.levels[parent[keep]],
        parent=parent[keep],
        cut=cut[parent[keep]],
        area=area[keep],
        h=h,
        interfaces=interfaces,
        boundary=boundary,
        adjacency=adjacency,
        touches_interface=touches,
        box=box,
        tag_names=tag_names,
    )
    logger.info(
        f"Foreground mesh: {mesh.n_cells} cells ({int(np.sum(mesh.cell_type == 4))} quads), "
        f"{interfaces.n_facets} interface facets, {boundary.n_facets} boundary facets"
    )
    return mesh


def _cell_areas(points, cell_vertices, cell_type):
    area = np.empty(cell_type.size)
    tri = np.flatnonzero(cell_type == 3)
    quad = np.flatnonzero(cell_type == 4)
    area[tri] = _triangle_areas(points[cell_vertices[tri, :3]])
    q = points[cell_vertices[quad]]
    area[quad] = (q[:, 2, 0] - q[:, 0, 0]) * (q[:, 2, 1] - q[:, 0, 1])
    return area


def _cell_centroids(points, cell_vertices, cell_type):
    out = np.empty((cell_type.size, 2))
    for nv in (3, 4):
        sel = np.flatnonzero(cell_type == nv)
        out[sel] = points[cell_vertices[sel, :nv]].mean(axis=1)
    return out


def _cell_sides(cell_vertices, cell_type):
    """All sides as (first point, second point, owner cell)."""
    firsts, seconds, owners = [], [], []
    for nv in (3, 4):
        sel = np.flatnonzero(cell_type == nv)
        v = cell_vertices[sel, :nv]
        for k in range(nv):
            firsts.append(v[:, k])
            seconds.append(v[:, (k + 1) % nv])
            owners.append(sel)
    return np.concatenate(firsts), np.concatenate(seconds), np.concatenate(owners)


def _match_sides(points, cell_vertices, cell_type, parent, dec_bounds, box, finest_size):
    """
    Neighbouring cell pairs with their shared segment, and the sides on the box.

    Sides inside a decomposition cell are shared exactly (same point ids); sides
    on a decomposition cell boundary are matched by collinear overlap.
    """
    a, b, owner = _cell_sides(cell_vertices, cell_type)
    pa, pb = points[a], points[b]
    x0, y0, x1, y1 = (dec_bounds[parent[owner], k] for k in range(4))
    vertical = (pa[:, 0] == pb[:, 0]) & ((pa[:, 0] == x0) | (pa[:, 0] == x1))
    horizontal = (pa[:, 1] == pb[:, 1]) & ((pa[:, 1] == y0) | (pa[:, 1] == y1))
    on_boundary = vertical | horizontal

    # ---------- interior sides: identical point pairs ----------
    interior = np.flatnonzero(~on_boundary)
    s1 = s2 = np.empty(0, dtype=np.int64)
    if interior.size:
        key = np.sort(np.column_stack([a[interior], b[interior]]), axis=1)
        _, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        order = np.argsort(inverse, kind='stable')
        dup = inverse[order][:-1] == inverse[order][1:]
        s1, s2 = interior[order[:-1][dup]], interior[order[1:][dup]]
    seg_in = np.stack([pa[s1], pb[s1]], axis=1).reshape(-1, 2, 2)

    # ---------- boundary sides: collinear overlap ----------
    quantum = tol = 1e-9 * finest_size
    cells_a, cells_b, segs = [owner[s1]], [owner[s2]], [seg_in]
    for mask, axis in ((vertical, 0), (horizontal, 1)):
        idx = np.flatnonzero(mask)
        along = 1 - axis
        lo = np.minimum(pa[idx, along], pb[idx, along])
        hi = np.maximum(pa[idx, along], pb[idx, along])
        i, j, start, end = overlapping_segments(line_keys(pa[idx, axis], quantum), lo, hi, tol)
        seg = np.empty((i.size, 2, 2))
        seg[:, :, axis] = pa[idx[i], axis][:, None]
        seg[:, 0, along], seg[:, 1, along] = start, end
        cells_a.append(owner[idx[i]])
        cells_b.append(owner[idx[j]])
        segs.append(seg)

    # ---------- box sides ----------
    (bx0, by0), (bx1, by1) = box
    box_masks = (
        horizontal & (pa[:, 1] == by0), vertical & (pa[:, 0] == bx1),
        horizontal & (pa[:, 1] == by1), vertical & (pa[:, 0] == bx0),
    )
    box_idx = [np.flatnonzero(m) for m in box_masks]
    box_side = np.concatenate(box_idx)
    box_tag = np.concatenate([np.full(ix.size, tag, dtype=object) for ix, tag in zip(box_idx, BOX_TAGS)])
    box_seg = np.stack([pa[box_side], pb[box_side]], axis=1).reshape(-1, 2, 2)

    pairs = (np.concatenate(cells_a), np.concatenate(cells_b), np.concatenate(segs).reshape(-1, 2, 2))
    return pairs, (owner[box_side], box_seg, box_tag)


def _normals(segments, centroids):
    """Unit normals of segments pointing away from the given cell centroids."""
    segments = segments.reshape(-1, 2, 2)
    d = segments[:, 1] - segments[:, 0]
    n = np.column_stack([d[:, 1], -d[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    mid = segments.mean(axis=1)
    flip = np.sum(n * (mid - centroids.reshape(-1, 2)), axis=1) < 0
    n[flip] *= -1.0
    return n


def _box_normals(tags):
    lookup = {
        'box_bottom': (0.0, -1.0), 'box_right': (1.0, 0.0),
        'box_top': (0.0, 1.0), 'box_left': (-1.0, 0.0),
    }
    return np.array([lookup[t] for t in tags], dtype=float).reshape(-1, 2)


def _closest_lsf(fields, segments):
    """Index of the level set closest to its iso-level at each segment midpoint."""
    segments = segments.reshape(-1, 2, 2)
    if segments.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    mid = segments.mean(axis=1)
    gap = np.stack([np.abs(f.sample(mid) - f.iso) for f in fields], axis=1)
    return np.argmin(gap, axis=1)


# =====================================================
# FOREGROUND BASIS
# =====================================================

class VolumeChunk(NamedTuple):
    """Quadrature data of a batch of same-type cells."""
    cells: np.ndarray      # (c,)
    dofs: np.ndarray       # (c, nl)
    points: np.ndarray     # (c, nq, 2) physical quadrature points
    weights: np.ndarray    # (c, nq) including |det J|
    values: np.ndarray     # (nq, nl)
    gradients: np.ndarray  # (c, nq, nl, 2) physical gradients


def facet_quadrature(segments, degree):
    """Gauss points (n, nq, 2) and weights (n, nq) along straight segments (n, 2, 2)."""
    rule = line_rule(degree)
    t = rule.points[:, 0]
    segments = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
    d = segments[:, 1] - segments[:, 0]
    points = segments[:, 0][:, None, :] + t[None, :, None] * d[:, None, :]
    weights = rule.weights[None, :] * np.linalg.norm(d, axis=1)[:, None]
    return points, weights


@dataclass(frozen=True, eq=False)
class ElementBlock:
    """Cells sharing one reference element, with their affine maps."""
    element: object
    cells: np.ndarray
    dofs: np.ndarray       # (nc, n_local)
    origin: np.ndarray     # (nc, 2)
    jacobian: np.ndarray   # (nc, 2, 2)
    det: np.ndarray
    inverse: np.ndarray

    @property
    def n_vertices(self):
        return self.element.n_vertices


@dataclass(frozen=True, eq=False)
class ForegroundBasis:
    """Cell-wise discontinuous Lagrange basis; every cell owns its nodes."""
    degree: int
    nodes: np.ndarray
    node_cell: np.ndarray
    cell_offsets: np.ndarray
    blocks: tuple
    block_of: np.ndarray
    position: np.ndarray

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def max_local(self):
        return max(b.element.n_nodes for b in self.blocks)

    def cell_dofs(self, cell):
        return np.arange(self.cell_offsets[cell], self.cell_offsets[cell + 1])

    def volume_chunks(self, degree, chunk=VOLUME_CHUNK):
        """Yield VolumeChunk batches covering every cell once."""
        for block in self.blocks:
            rule = cell_rule(block.n_vertices, degree)
            N = block.element.values(rule.points)
            dN = block.element.gradients(rule.points)
            for start in range(0, block.cells.size, chunk):
                s = slice(start, start + chunk)
                points = block.origin[s][:, None, :] + np.einsum('crs,qs->cqr', block.jacobian[s], rule.points)
                yield VolumeChunk(
                    cells=block.cells[s],
                    dofs=block.dofs[s],
                    points=points,
                    weights=rule.weights[None, :] * np.abs(block.det[s])[:, None],
                    values=N,
                    gradients=np.einsum('qar,crs->cqas', dN, block.inverse[s]),
                )

    def reference_coordinates(self, cells, points):
        """Reference coordinates of points (n, nq, 2) in the cells (n,)."""
        cells = np.asarray(cells)
        out = np.empty_like(points, dtype=float)
        for bi, block in enumerate(self.blocks):
            sel = np.flatnonzero(self.block_of[cells] == bi)
            if sel.size:
                rows = self.position[cells[sel]]
                out[sel] = np.einsum('crs,cqs->cqr', block.inverse[rows], points[sel] - block.origin[rows][:, None, :])
        return out

    def trace(self, cells, points):
        """
        Local basis of each cell evaluated at its own points.

        Args:
            cells: (n,) cell ids
            points: (n, nq, 2) physical points

        Returns:
            dofs (n, m), values (n, nq, m), gradients (n, nq, m, 2) with m the
            largest local node count; unused slots have dof -1 and zero values.
        """
        cells = np.asarray(cells)
        n, nq = points.shape[:2]
        m = self.max_local
        dofs = np.full((n, m), -1, dtype=np.int64)
        values = np.zeros((n, nq, m))
        grads = np.zeros((n, nq, m, 2))
        ref = self.reference_coordinates(cells, points)
        for bi, block in enumerate(self.blocks):
            sel = np.flatnonzero(self.block_of[cells] == bi)
            if not sel.size:
                continue
            rows = self.position[cells[sel]]
            nl = block.element.n_nodes
            flat = ref[sel].reshape(-1, 2)
            values[sel, :, :nl] = block.element.values(flat).reshape(sel.size, nq, nl)
            g = block.element.gradients(flat).reshape(sel.size, nq, nl, 2)
            grads[sel, :, :nl, :] = np.einsum('cqar,crs->cqas', g, block.inverse[rows])
            dofs[sel, :nl] = block.dofs[rows]
        return dofs, values, grads


@log_stage
def build_foreground_basis(mesh, q):
    """
    Discontinuous Lagrange basis of degree q on every foreground cell.

    Raises:
        ConfigError: q not in {1, 2}
        BasisError: a cell has zero or negative Jacobian
    """
    if q not in (1, 2):
        raise ConfigError(f"Foreground degree {q} not supported (allowed: 1, 2)")
    n_local = np.array([reference_element(int(nv), q).n_nodes for nv in (3, 4)])
    local = np.where(mesh.cell_type == 3, n_local[0], n_local[1])
    offsets = np.concatenate([[0], np.cumsum(local)])
    nodes = np.empty((offsets[-1], 2))
    node_cell = np.repeat(np.arange(mesh.n_cells), local)
    block_of = np.full(mesh.n_cells, -1, dtype=np.int64)
    position = np.full(mesh.n_cells, -1, dtype=np.int64)

    blocks = []
    for nv in (3, 4):
        cells = np.flatnonzero(mesh.cell_type == nv)
        if not cells.size:
            continue
        element = reference_element(nv, q)
        origin, J, det, inv = affine_maps(mesh.vertices(cells))
        bad = np.flatnonzero(~(det > 0))
        if bad.size:
            c = cells[bad[0]]
            raise BasisError(
                f"Foreground cell {c} has non-positive Jacobian {det[bad[0]]:.3e} "
                f"(vertices {mesh.vertices([c])[0].tolist()})"
            )
        dofs = offsets[cells][:, None] + np.arange(element.n_nodes)[None, :]
        nodes[dofs.ravel()] = (origin[:, None, :] + np.einsum('crs,as->car', J, element.nodes)).reshape(-1, 2)
        block_of[cells] = len(blocks)
        position[cells] = np.arange(cells.size)
        blocks.append(ElementBlock(element, cells, dofs, origin, J, det, inv))

    basis = ForegroundBasis(q, nodes, node_cell, offsets, tuple(blocks), block_of, position)
    logger.info(f"Foreground basis: degree {q}, {basis.n_nodes} nodes on {mesh.n_cells} cells")
    return basis
