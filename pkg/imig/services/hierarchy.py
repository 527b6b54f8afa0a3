"""
imig - Hierarchical Spline Spaces
==================================
Nested level sequences of tensor-product spaces, the hierarchical (HB) and
truncated hierarchical (THB) bases built on them, and the hierarchically
refined mesh of active cells.

Refinement subdomains are boolean masks over the flat cell indices of each
level. Level 0 covers the whole grid; every finer subdomain is a union of
children of coarser cells (all four siblings or none).

Every active function is stored by its coefficients over the finest level:
    F_i = sum_j C[i, j] B^{r-1}_j
so point evaluation is one sparse product with the finest tensor basis.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage, sparse

from imig.config import Config
from imig.exceptions import ConfigError
from imig.services.spline import basis_matrix, refinement_coefficients
from imig.utils.segments import line_keys, overlapping_segments

logger = logging.getLogger(__name__)


# =====================================================
# CELL MASK HELPERS
# =====================================================

def children_mask(mask, n_cells):
    """Mask over the refined grid selecting the four children of every marked cell."""
    ncx, ncy = n_cells
    grid = np.asarray(mask, dtype=bool).reshape(ncy, ncx)
    return np.repeat(np.repeat(grid, 2, axis=0), 2, axis=1).ravel()


def parent_mask(mask, n_cells_fine, require_all=False):
    """Coarse-grid mask of cells having any (or all) children marked."""
    ncx, ncy = n_cells_fine
    blocks = np.asarray(mask, dtype=bool).reshape(ncy // 2, 2, ncx // 2, 2)
    reduced = blocks.all(axis=(1, 3)) if require_all else blocks.any(axis=(1, 3))
    return reduced.ravel()


def parent_cells(cells, n_cells_fine):
    """Flat index of each fine cell's parent on the coarser grid."""
    ncx = n_cells_fine[0]
    cells = np.asarray(cells)
    cx, cy = cells % ncx, cells // ncx
    return cx // 2 + (ncx // 2) * (cy // 2)


def _as_mask(cells, n_total):
    cells = np.asarray(cells)
    if cells.dtype == bool:
        if cells.size != n_total:
            raise ConfigError(f"Subdomain mask has {cells.size} entries, level has {n_total} cells")
        return cells.copy()
    mask = np.zeros(n_total, dtype=bool)
    if cells.size:
        if cells.min() < 0 or cells.max() >= n_total:
            raise ConfigError(f"Subdomain cell index outside [0, {n_total})")
        mask[cells] = True
    return mask


def supports_inside(space, mask):
    """True for every function of the space whose support box lies in the masked cells."""
    ncx, ncy = space.n_cells
    grid = np.asarray(mask, dtype=np.int64).reshape(ncy, ncx)
    sat = np.zeros((ncy + 1, ncx + 1), dtype=np.int64)
    sat[1:, 1:] = grid.cumsum(axis=0).cumsum(axis=1)
    x0, x1, y0, y1 = space.function_support()
    count = sat[y1 + 1, x1 + 1] - sat[y0, x1 + 1] - sat[y1 + 1, x0] + sat[y0, x0]
    return count == (x1 - x0 + 1) * (y1 - y0 + 1)


# =====================================================
# DOMAIN TYPES
# =====================================================

@dataclass(frozen=True, eq=False)
class LevelSequence:
    """Nested spaces V^0 < V^1 < ... and refinement subdomains Omega^l (cell masks)."""
    levels: tuple
    subdomains: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ConfigError("A level sequence needs at least one level")
        if len(self.subdomains) != len(levels):
            raise ConfigError(f"{len(levels)} levels but {len(self.subdomains)} subdomains")
        masks = tuple(
            _as_mask(cells, int(np.prod(space.n_cells)))
            for cells, space in zip(self.subdomains, levels)
        )
        object.__setattr__(self, 'levels', levels)
        object.__setattr__(self, 'subdomains', masks)

        if not masks[0].all():
            raise ConfigError("Omega^0 must cover every level-0 cell")
        for l in range(1, len(levels)):
            n_fine = levels[l].n_cells
            coarse_any = parent_mask(masks[l], n_fine)
            coarse_all = parent_mask(masks[l], n_fine, require_all=True)
            if np.any(coarse_any != coarse_all):
                raise ConfigError(f"Omega^{l} is not a union of level-{l - 1} cells")
            if np.any(coarse_any & ~masks[l - 1]):
                raise ConfigError(f"Omega^{l} is not nested in Omega^{l - 1}")

    @classmethod
    def build(cls, base, subdomains, max_depth=Config.MAX_DEPTH):
        """Level sequence from a base space and subdomains Omega^1..Omega^{r-1} (Omega^0 is implied)."""
        depth = len(subdomains) + 1
        if depth > max_depth:
            raise ConfigError(f"Hierarchy depth {depth} exceeds the maximum of {max_depth}")
        levels = [base]
        for _ in subdomains:
            levels.append(levels[-1].refined())
        full = np.ones(int(np.prod(base.n_cells)), dtype=bool)
        return cls(tuple(levels), (full, *subdomains))

    @classmethod
    def uniform(cls, base):
        return cls.build(base, [])

    @property
    def depth(self):
        return len(self.levels)

    @property
    def finest(self):
        return self.levels[-1]

    @cached_property
    def refinements(self):
        """Refinement matrices R^l of shape (n_{l+1}, n_l)."""
        return tuple(refinement_coefficients(space)[1] for space in self.levels[:-1])


@dataclass(frozen=True, eq=False)
class THBSpace:
    """Active hierarchical functions with their finest-level coefficient rows."""
    sequence: LevelSequence
    levels: np.ndarray
    indices: np.ndarray
    coefficients: sparse.csr_matrix
    truncated: bool = True

    @property
    def n_functions(self):
        return self.levels.size

    @property
    def finest(self):
        return self.sequence.finest

    @property
    def degrees(self):
        return self.sequence.levels[0].degrees

    def level_counts(self):
        return np.bincount(self.levels, minlength=self.sequence.depth)

    def evaluate(self, points):
        return eval_thb(self, points)


@dataclass(frozen=True, eq=False)
class HierMesh:
    """Active cells of a hierarchy: in Omega^l and not in Omega^{l+1}."""
    levels: np.ndarray
    cells: np.ndarray
    bounds: np.ndarray     # (n, 4) as [x0, y0, x1, y1]
    parents: np.ndarray    # parent cell index one level up, -1 on level 0
    neighbors: np.ndarray  # (n_pairs, 2) active cells sharing part of an edge

    @property
    def n_cells(self):
        return self.levels.size

    @property
    def areas(self):
        b = self.bounds
        return (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])

    def level_counts(self, depth=None):
        return np.bincount(self.levels, minlength=depth or (self.levels.max() + 1))


# =====================================================
# OPERATIONS
# =====================================================

def _build_hierarchical(seq, truncate):
    base = seq.levels[0]
    n0 = base.n_functions
    coefficients = sparse.identity(n0, format='csr')
    levels = np.zeros(n0, dtype=int)
    indices = np.arange(n0)

    for l in range(seq.depth - 1):
        coarse, fine = seq.levels[l], seq.levels[l + 1]
        target = seq.subdomains[l + 1]
        covered = supports_inside(coarse, parent_mask(target, fine.n_cells))
        activated = supports_inside(fine, target)

        on_level = levels == l
        drop = on_level & covered[np.where(on_level, indices, 0)]

        coefficients = coefficients @ seq.refinements[l].T
        if truncate:
            coefficients = coefficients @ sparse.diags((~activated).astype(float))
        coefficients = coefficients.tocsr()[~drop]

        new = np.flatnonzero(activated)
        fresh = sparse.csr_matrix(
            (np.ones(new.size), (np.arange(new.size), new)), shape=(new.size, fine.n_functions)
        )
        coefficients = sparse.vstack([coefficients, fresh], format='csr')
        coefficients.eliminate_zeros()
        levels = np.concatenate([levels[~drop], np.full(new.size, l + 1)])
        indices = np.concatenate([indices[~drop], new])
        logger.debug(f"Level {l + 1}: removed {int(drop.sum())} level-{l} functions, activated {new.size}")

    space = THBSpace(seq, levels, indices, coefficients, truncated=truncate)
    logger.info(
        f"{'THB' if truncate else 'HB'} space: {space.n_functions} functions, "
        f"per level {space.level_counts().tolist()}"
    )
    return space


def build_thb(seq):
    """Truncated hierarchical basis of a level sequence."""
    return _build_hierarchical(seq, truncate=True)


def build_hb(seq):
    """Hierarchical basis without truncation; same active functions as build_thb."""
    return _build_hierarchical(seq, truncate=False)


def eval_thb(space, x, gradient=False):
    """
    Evaluate all active functions at points.

    Returns:
        Sparse (n_points x n_functions) matrix of values, or the pair of
        x- and y-derivative matrices when gradient=True.

    Raises:
        DomainError: a point lies outside Omega^0.
    """
    C_T = space.coefficients.T.tocsc()
    if gradient:
        gx, gy = basis_matrix(space.finest, x, gradient=True)
        return (gx @ C_T).tocsr(), (gy @ C_T).tocsr()
    return (basis_matrix(space.finest, x) @ C_T).tocsr()


def active_mesh(seq):
    """Hierarchically refined mesh of active cells with parent and edge-neighbour links."""
    levels, cells, bounds, parents = [], [], [], []
    for l, space in enumerate(seq.levels):
        mask = seq.subdomains[l]
        if l + 1 < seq.depth:
            mask = mask & ~parent_mask(seq.subdomains[l + 1], seq.levels[l + 1].n_cells)
        active = np.flatnonzero(mask)
        levels.append(np.full(active.size, l))
        cells.append(active)
        bounds.append(space.cell_bounds(active))
        parents.append(parent_cells(active, space.n_cells) if l > 0 else np.full(active.size, -1))

    bounds = np.vstack(bounds)
    mesh = HierMesh(
        levels=np.concatenate(levels),
        cells=np.concatenate(cells),
        bounds=bounds,
        parents=np.concatenate(parents),
        neighbors=_box_neighbors(bounds, min(seq.finest.spacing)),
    )
    logger.debug(f"Active mesh: {mesh.n_cells} cells, per level {mesh.level_counts(seq.depth).tolist()}")
    return mesh


def _box_neighbors(bounds, finest_size):
    n = bounds.shape[0]
    quantum = 1e-9 * finest_size
    tol = 1e-9 * finest_size
    owner = np.concatenate([np.arange(n), np.arange(n)])
    pairs = []
    # vertical sides (x = const), then horizontal sides (y = const)
    for coord, lo, hi in (
        (np.concatenate([bounds[:, 0], bounds[:, 2]]), np.tile(bounds[:, 1], 2), np.tile(bounds[:, 3], 2)),
        (np.concatenate([bounds[:, 1], bounds[:, 3]]), np.tile(bounds[:, 0], 2), np.tile(bounds[:, 2], 2)),
    ):
        a, b, _, _ = overlapping_segments(line_keys(coord, quantum), lo, hi, tol)
        pairs.append(np.column_stack([owner[a], owner[b]]))
    pairs = np.vstack(pairs)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    return np.unique(np.sort(pairs, axis=1), axis=0)


# =====================================================
# INTERFACE-DRIVEN REFINEMENT
# =====================================================

def interface_cells(space, cells, classify, samples=Config.REFINEMENT_SAMPLES):
    """
    Cells whose sampled lattice sees more than one material id.

    Args:
        space: TensorBSplineSpace providing the cell grid
        cells: flat cell indices to inspect
        classify: callable mapping points (n, 2) to integer material ids
        samples: lattice intervals per cell side

    Returns:
        Boolean mask over all cells of the space.
    """
    flagged = np.zeros(int(np.prod(space.n_cells)), dtype=bool)
    cells = np.asarray(cells)
    if cells.size == 0:
        return flagged
    t = np.linspace(0.0, 1.0, samples + 1)
    u, v = np.meshgrid(t, t, indexing='xy')
    b = space.cell_bounds(cells)
    px = b[:, 0:1] + (b[:, 2:3] - b[:, 0:1]) * u.ravel()[None, :]
    py = b[:, 1:2] + (b[:, 3:4] - b[:, 1:2]) * v.ravel()[None, :]
    ids = np.asarray(classify(np.column_stack([px.ravel(), py.ravel()]))).reshape(cells.size, -1)
    flagged[cells] = ids.min(axis=1) != ids.max(axis=1)
    return flagged


def dilate(mask, n_cells, ring):
    """Grow a cell mask by ring layers of edge and vertex neighbours."""
    if ring <= 0 or not np.any(mask):
        return np.asarray(mask, dtype=bool).copy()
    ncx, ncy = n_cells
    grown = ndimage.binary_dilation(
        np.asarray(mask, dtype=bool).reshape(ncy, ncx), structure=np.ones((3, 3), dtype=bool), iterations=ring
    )
    return grown.ravel()


def refine_around(base, classify, depth, ring=None, samples=Config.REFINEMENT_SAMPLES,
                  max_depth=Config.MAX_DEPTH):
    """
    Level sequence refined `depth` times around material interfaces.

    At every level the interface cells inside the current subdomain are found by
    sampling, grown by `ring` cells (default: the spline degree) and clipped to
    the subdomain; their children form the next subdomain.
    """
    if depth < 0:
        raise ConfigError(f"Refinement depth must be non-negative, got {depth}")
    if depth + 1 > max_depth:
        raise ConfigError(f"Hierarchy depth {depth + 1} exceeds the maximum of {max_depth}")
    ring = max(base.degrees) if ring is None else ring

    space = base
    current = np.ones(int(np.prod(base.n_cells)), dtype=bool)
    subdomains = []
    for level in range(depth):
        flagged = interface_cells(space, np.flatnonzero(current), classify, samples)
        marked = dilate(flagged, space.n_cells, ring) & current
        if not marked.any():
            logger.info(f"No interface cells on level {level}; hierarchy stops at depth {level + 1}")
            break
        current = children_mask(marked, space.n_cells)
        subdomains.append(current)
        space = space.refined()
        logger.debug(f"Level {level + 1} subdomain: {int(current.sum())} cells")
    return LevelSequence.build(base, subdomains, max_depth=max_depth)
