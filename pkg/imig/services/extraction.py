"""
imig - Extraction Operators
============================
Sparse interpolation of the enriched functions onto the foreground basis:

    M_ij = B_i(x_j)   for every foreground node x_j

Because the foreground basis is nodal on every cell, M_ij is the enriched
function's value at the node, taken from the cell that owns the node (the
Heaviside indicator decides which enriched copy of a background function is
non-zero there). Rows that vanish on the whole foreground are pruned, and so
are rows of small support that repeat a combination of their neighbours (two
copies seen through a single node of a sliver cell); each kept row remembers
its enriched function id.

The discrete system on the enriched space is then K = M A M^T, f = M b.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import qr
from scipy.sparse.csgraph import connected_components

from imig.config import Config
from imig.exceptions import AssemblyError, InputError
from imig.services.hierarchy import eval_thb
from imig.utils.decorators import log_stage

logger = logging.getLogger(__name__)

LOST_VALUE_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class ExtractionOperator:
    """Extraction matrix (n_functions x n_nodes * n_components) and the enriched id per row."""
    matrix: sparse.csr_matrix
    function_ids: np.ndarray
    space: object = None  # EnrichedSpace
    n_components: int = 1

    @property
    def n_functions(self):
        return self.matrix.shape[0]

    @property
    def n_nodes(self):
        return self.matrix.shape[1] // self.n_components

    @property
    def base_functions(self):
        """Background function behind each row."""
        if self.space is None:
            return self.function_ids
        return self.space.base_function[self.function_ids // self.n_components]


@log_stage
def build_extraction(space, basis, prune=Config.PRUNE_TOLERANCE):
    """
    Extraction operator of an enriched space onto a foreground basis.

    Raises:
        AssemblyError: a background function is non-zero at a node whose cell
            no enriched copy of it covers
    """
    E = eval_thb(space.background, basis.nodes).tocoo()
    node = E.row
    base = E.col
    value = E.data
    enriched = space.function_of(base, basis.node_cell[node])
    lost = (enriched < 0) & (np.abs(value) > LOST_VALUE_TOLERANCE)
    if np.any(lost):
        k = np.flatnonzero(lost)[0]
        raise AssemblyError(
            f"Background function {base[k]} is {value[k]:.3e} at node {node[k]} "
            f"(cell {basis.node_cell[node[k]]}) but no enriched copy covers that cell"
        )
    found = enriched >= 0
    M = sparse.csr_matrix(
        (value[found], (enriched[found], node[found])), shape=(space.n_functions, basis.n_nodes)
    )
    M.sum_duplicates()

    row_max = np.zeros(M.shape[0])
    if M.nnz:
        row_max = abs(M).max(axis=1).toarray().ravel()
    keep = np.flatnonzero(row_max >= prune)
    n_pruned = M.shape[0] - keep.size
    if n_pruned:
        logger.info(f"Pruned {n_pruned} enriched functions that vanish on the foreground")
    M = M[keep].tocsr()
    M.eliminate_zeros()

    dependent = dependent_rows(M, basis.node_cell)
    if dependent.size:
        logger.info(f"Dropped {dependent.size} enriched functions that are linearly dependent on the foreground")
        independent = np.setdiff1d(np.arange(M.shape[0]), dependent)
        keep = keep[independent]
        M = M[independent].tocsr()
    logger.info(f"Extraction operator: {M.shape[0]} x {M.shape[1]}, {M.nnz} non-zeros")
    return ExtractionOperator(M, keep, space)


def dependent_rows(matrix, node_cell, max_cells=Config.DEPENDENCE_MAX_CELLS, tol=Config.DEPENDENCE_TOLERANCE):
    """
    Rows of an extraction matrix that lie in the span of other rows.

    Only rows supported on at most `max_cells` foreground cells are checked:
    they are grouped by shared nodes and each group gets a pivoted QR, the
    rows past its numerical rank are reported.
    """
    M = sparse.csr_matrix(matrix)
    n_rows = M.shape[0]
    if n_rows < 2 or not M.nnz:
        return np.zeros(0, dtype=int)
    row_of = np.repeat(np.arange(n_rows), np.diff(M.indptr))
    n_cells = int(node_cell.max()) + 1
    pairs = np.unique(row_of.astype(np.int64) * n_cells + node_cell[M.indices])
    cells_per_row = np.bincount(pairs // n_cells, minlength=n_rows)
    rows = np.flatnonzero(cells_per_row <= max_cells)
    if rows.size < 2:
        return np.zeros(0, dtype=int)

    local = M[rows]
    pattern = local.copy()
    pattern.data[:] = 1.0
    n_groups, labels = connected_components(pattern @ pattern.T, directed=False)
    dropped = []
    for g in np.flatnonzero(np.bincount(labels, minlength=n_groups) > 1):
        members = np.flatnonzero(labels == g)
        block = local[members]
        cols = np.unique(block.indices)
        _, R, piv = qr(block[:, cols].toarray().T, mode='economic', pivoting=True)
        pivots = np.abs(np.diag(R))
        rank = int(np.sum(pivots > tol * pivots[0]))
        dropped.extend(rows[members[piv[rank:]]])
    return np.sort(np.asarray(dropped, dtype=int))


def vector_extraction(operator, dim=2):
    """Operator for a `dim`-component field, interleaved as index dim * i + k."""
    M = sparse.kron(operator.matrix, sparse.identity(dim, format='csr'), format='csr')
    ids = (dim * operator.function_ids[:, None] + np.arange(dim)[None, :]).ravel()
    return ExtractionOperator(M, ids, operator.space, dim)


def block_extraction(*operators):
    """Block-diagonal operator of several fields (monolithic systems)."""
    return sparse.block_diag([getattr(op, 'matrix', op) for op in operators], format='csr')


def interpolate_field(operator, coefficients):
    """
    Foreground nodal values M^T d of a solution.

    Returns:
        (n_nodes,) for scalar operators, (n_nodes, n_components) otherwise.

    Raises:
        InputError: coefficient count does not match the operator
    """
    d = np.asarray(coefficients, dtype=float).ravel()
    if d.size != operator.n_functions:
        raise InputError(f"Expected {operator.n_functions} coefficients, got {d.size}")
    values = operator.matrix.T @ d
    if operator.n_components == 1:
        return values
    return values.reshape(-1, operator.n_components)


def write_operator(path, operator):
    """Dump an operator as 'row col value' triplets with a shape header."""
    M = operator.matrix.tocoo()
    data = np.column_stack([M.row, M.col, M.data])
    header = f"{M.shape[0]} {M.shape[1]} {M.nnz}"
    np.savetxt(path, data, fmt=['%d', '%d', '%.17g'], header=header, comments='')
    logger.info(f"Wrote extraction operator ({M.nnz} non-zeros) to {path}")
    return path
