"""
imig - Heaviside Enrichment
============================
Function-wise enrichment of a background basis: the foreground cells inside
the support of a background function are split into edge-connected
same-material subregions, and the function is duplicated once per subregion
with the subregion's indicator as multiplier:

    B_k^m(x) = psi_k^m(x) B_k(x),   psi_k^m = 1 on the cells of subregion m

Indicators are purely combinatorial (cell id -> enriched function lookup).
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from imig.config import Config
from imig.services.hierarchy import eval_thb
from imig.utils.decorators import log_stage

logger = logging.getLogger(__name__)

SAMPLE_SHRINK = 0.5


@dataclass(frozen=True, eq=False)
class EnrichedSpace:
    """Enriched functions (base function, subregion level m) and their indicator cell sets."""
    background: object          # THBSpace
    base_function: np.ndarray   # (n,) background function id
    level: np.ndarray           # (n,) enrichment level m, 1-based
    counts: np.ndarray          # (n_base,) L_k, 0 for dropped functions
    keys: np.ndarray            # sorted base * n_cells + cell
    key_function: np.ndarray    # enriched id per key
    indicators: sparse.csr_matrix  # (n, n_cells) boolean membership
    n_cells: int

    @property
    def n_functions(self):
        return self.base_function.size

    def indicator(self, i):
        """Foreground cells of enriched function i."""
        return self.indicators.indices[self.indicators.indptr[i]:self.indicators.indptr[i + 1]]

    def function_of(self, base, cells):
        """Enriched function owning each (base function, cell) pair, -1 if none."""
        key = np.asarray(base, dtype=np.int64) * self.n_cells + np.asarray(cells, dtype=np.int64)
        pos = np.searchsorted(self.keys, key)
        pos = np.minimum(pos, max(self.keys.size - 1, 0))
        found = self.keys.size > 0
        hit = (self.keys[pos] == key) if found else np.zeros(np.shape(key), dtype=bool)
        return np.where(hit, self.key_function[pos] if found else -1, -1)


def interior_samples(mesh, shrink=SAMPLE_SHRINK):
    """
    Interior sample points of every cell: the centroid and each vertex pulled
    towards it.

    Returns:
        (points (n_samples, 2), owning cell per point)
    """
    points, owners = [], []
    for nv in (3, 4):
        cells = np.flatnonzero(mesh.cell_type == nv)
        if not cells.size:
            continue
        v = mesh.vertices(cells)
        c = v.mean(axis=1, keepdims=True)
        pts = np.concatenate([c, c + shrink * (v - c)], axis=1)
        points.append(pts.reshape(-1, 2))
        owners.append(np.repeat(cells, nv + 1))
    return np.vstack(points), np.concatenate(owners)


def support_cells(background, mesh, tol=Config.PRUNE_TOLERANCE):
    """Sparse (n_cells x n_base) pattern of foreground cells inside each function's support."""
    points, owner = interior_samples(mesh)
    E = eval_thb(background, points).tocoo()
    nonzero = np.abs(E.data) > tol
    Z = sparse.csc_matrix(
        (np.ones(int(nonzero.sum())), (owner[E.row[nonzero]], E.col[nonzero])),
        shape=(mesh.n_cells, background.n_functions),
    )
    Z.sum_duplicates()
    Z.sort_indices()
    Z.data[:] = 1.0
    return Z


def enumerate_subregions(cells, mesh):
    """
    Maximal edge-connected same-material subsets of the given foreground cells,
    ordered by their smallest cell id.
    """
    cells = np.unique(np.asarray(cells, dtype=np.int64))
    if not cells.size:
        return []
    labels = _component_labels(cells, mesh)
    return [cells[labels == m] for m in range(labels.max() + 1)]


def _component_labels(cells, mesh):
    """Component label per (sorted) cell, numbered by first occurrence."""
    sub = mesh.adjacency[cells][:, cells]
    n, labels = connected_components(sub, directed=False)
    _, first = np.unique(labels, return_index=True)
    rank = np.empty(n, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(n)
    return rank[labels]


@log_stage
def build_enriched_space(background, mesh):
    """
    Enriched space of a background THB space over a classified foreground mesh.

    Functions whose support holds no material cell are dropped (L_k = 0).
    """
    Z = support_cells(background, mesh)
    n_base = background.n_functions
    per_function = np.diff(Z.indptr)
    column = np.repeat(np.arange(n_base), per_function)
    rows = Z.indices

    material = mesh.material[rows]
    big = np.iinfo(np.int64).max
    mat_min = np.full(n_base, big, dtype=np.int64)
    mat_max = np.full(n_base, -1, dtype=np.int64)
    np.minimum.at(mat_min, column, material)
    np.maximum.at(mat_max, column, material)
    flagged = np.bincount(column, weights=mesh.touches_interface[rows].astype(float), minlength=n_base) > 0

    # a support free of interfaces and boundaries in one material is one connected region
    simple = (per_function > 0) & ~flagged & (mat_min == mat_max)
    counts = (per_function > 0).astype(np.int64)
    labels = np.zeros(rows.size, dtype=np.int64)
    for k in np.flatnonzero((per_function > 0) & ~simple):
        seg = slice(Z.indptr[k], Z.indptr[k + 1])
        lab = _component_labels(rows[seg], mesh)
        labels[seg] = lab
        counts[k] = lab.max() + 1

    offsets = np.concatenate([[0], np.cumsum(counts)])
    enriched = offsets[column] + labels
    n_enriched = int(offsets[-1])
    base_function = np.repeat(np.arange(n_base), counts)
    level = np.arange(n_enriched) - offsets[base_function] + 1

    keys = column.astype(np.int64) * mesh.n_cells + rows
    indicators = sparse.csr_matrix(
        (np.ones(rows.size, dtype=bool), (enriched, rows)), shape=(n_enriched, mesh.n_cells)
    )
    indicators.sort_indices()

    space = EnrichedSpace(
        background=background,
        base_function=base_function,
        level=level,
        counts=counts,
        keys=keys,
        key_function=enriched,
        indicators=indicators,
        n_cells=mesh.n_cells,
    )
    logger.info(
        f"Enriched space: {n_enriched} functions from {n_base} background functions "
        f"({int(np.sum(counts == 0))} dropped, {int(np.sum(counts > 1))} enriched, max L = {int(counts.max(initial=0))})"
    )
    return space
