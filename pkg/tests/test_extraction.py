"""
imig - Extraction Operator Tests
"""
import numpy as np
import pytest
from scipy import sparse

from imig.exceptions import InputError
from imig.models import Material
from imig.services.discretization import FieldSpec, build_discretization
from imig.services.extraction import (
    block_extraction, dependent_rows, interpolate_field, vector_extraction, write_operator,
)
from imig.services.geometry import PhaseConfig, discretize_lsf
from imig.services.hierarchy import eval_thb
from imig.services.physics import ThermalProblem, assemble_thermal
from imig.services.solver import reduce
from imig.services.spline import TensorBSplineSpace
from imig.utils.quadrature import quad_rule

CONDUCTIVITY = 2.0


def single_material(p, q):
    """3x3 unit grid entirely inside one material (no cut cells)."""
    grid = TensorBSplineSpace.uniform((3, 3), 1, (0.0, 0.0), (1.0, 1.0))
    lsf = discretize_lsf(lambda x, y: np.ones_like(x), grid, name='solid')
    material = Material('solid', conductivity=CONDUCTIVITY)
    phases = PhaseConfig(1, {1: 'solid'}, [material])
    disc = build_discretization((3, 3), (0.0, 0.0), (1.0, 1.0), [lsf], phases, [FieldSpec('T', p)], q)
    return disc, material


def direct_stiffness(background, degree):
    """Conduction matrix of the background basis by cell-wise Gauss quadrature."""
    rule = quad_rule(degree)
    n = background.n_functions
    K = np.zeros((n, n))
    for cy in range(3):
        for cx in range(3):
            points = rule.points + np.array([cx, cy], dtype=float)
            gx, gy = eval_thb(background, points, gradient=True)
            gx, gy = gx.toarray(), gy.toarray()
            w = rule.weights[:, None]
            K += CONDUCTIVITY * (gx.T @ (w * gx) + gy.T @ (w * gy))
    return K


class TestExtraction:
    @pytest.mark.parametrize('p,q', [(1, 1), (1, 2), (2, 2)])
    def test_reduced_matrix_matches_direct_assembly(self, p, q):
        disc, material = single_material(p, q)
        field = disc['T']
        problem = ThermalProblem.from_materials([material])
        A, b = assemble_thermal(problem, disc.mesh, disc.basis)
        K = reduce(A, b, field.extraction).matrix.toarray()

        ids = field.extraction.base_functions
        direct = direct_stiffness(field.background, 2 * q)[np.ix_(ids, ids)]
        assert field.n_dofs == field.n_background
        assert np.max(np.abs(K - direct)) < 1e-10 * np.max(np.abs(direct))

    def test_no_enrichment_without_interfaces(self):
        disc, _ = single_material(2, 2)
        assert np.all(disc['T'].enriched.counts == 1)

    def test_extracted_basis_is_partition_of_unity(self, circle_problem):
        disc = circle_problem([FieldSpec('T', 2, depth=1)], q=2)
        op = disc['T'].extraction
        values = interpolate_field(op, np.ones(op.n_functions))
        assert values.shape == (disc.basis.n_nodes,)
        assert np.allclose(values, 1.0, atol=1e-12)

    def test_rows_are_not_empty(self, circle_problem):
        disc = circle_problem([FieldSpec('T', 1)])
        M = disc['T'].extraction.matrix
        assert np.all(np.diff(M.indptr) > 0)

    def test_vector_extraction_interleaves_components(self, circle_problem):
        disc = circle_problem([FieldSpec('T', 1)])
        op = disc['T'].extraction
        vec = vector_extraction(op)
        assert vec.matrix.shape == (2 * op.n_functions, 2 * op.n_nodes)
        assert vec.n_nodes == op.n_nodes
        assert vec.function_ids[:4].tolist() == [2 * op.function_ids[0], 2 * op.function_ids[0] + 1,
                                                 2 * op.function_ids[1], 2 * op.function_ids[1] + 1]
        assert np.array_equal(vec.base_functions[::2], op.base_functions)
        values = interpolate_field(vec, np.tile([1.0, 0.0], op.n_functions))
        assert values.shape == (op.n_nodes, 2)
        assert np.allclose(values[:, 0], 1.0)
        assert np.allclose(values[:, 1], 0.0)

    def test_vector_field_spec(self, circle_problem):
        disc = circle_problem([FieldSpec('T', 1), FieldSpec('u', 1, n_components=2)])
        assert disc['u'].n_dofs == 2 * disc['T'].n_dofs
        assert disc.dof_counts() == {'T': disc['T'].n_dofs, 'u': disc['u'].n_dofs}

    def test_block_extraction(self, circle_problem):
        disc = circle_problem([FieldSpec('T', 1), FieldSpec('u', 2, n_components=2)], q=2)
        B = block_extraction(disc['T'].extraction, disc['u'].extraction)
        assert B.shape == (disc['T'].n_dofs + disc['u'].n_dofs, 3 * disc.basis.n_nodes)

    def test_block_extraction_of_bare_matrices(self):
        B = block_extraction(sparse.identity(2, format='csr'), 2.0 * sparse.identity(3, format='csr'))
        assert B.shape == (5, 5)
        assert B.diagonal().tolist() == [1.0, 1.0, 2.0, 2.0, 2.0]

    def test_interpolate_rejects_wrong_size(self, circle_problem):
        op = circle_problem([FieldSpec('T', 1)])['T'].extraction
        with pytest.raises(InputError):
            interpolate_field(op, np.ones(op.n_functions + 1))

    def test_write_operator(self, tmp_path, circle_problem):
        op = circle_problem([FieldSpec('T', 1)])['T'].extraction
        path = write_operator(tmp_path / 'M.txt', op)
        with open(path) as f:
            header = f.readline().split()
        assert [int(v) for v in header] == [op.matrix.shape[0], op.matrix.shape[1], op.matrix.nnz]
        data = np.loadtxt(path, skiprows=1)
        assert data.shape == (op.matrix.nnz, 3)
        assert data[:, 2].sum() == pytest.approx(op.matrix.sum())


class TestDependentRows:
    NODE_CELL = np.array([0, 0, 1, 1, 2, 2, 3, 3])

    def test_single_node_copies(self):
        M = np.zeros((4, 8))
        M[0, 0], M[1, 0] = 0.0403, 0.0505
        M[2, [1, 2]] = 1.0
        M[3, 3] = 1.0
        assert dependent_rows(sparse.csr_matrix(M), self.NODE_CELL).tolist() == [0]

    def test_overlapping_independent_rows_are_kept(self):
        M = np.zeros((3, 8))
        M[0, [1, 2]] = [1.0, 1.0]
        M[1, [1, 2]] = [1.0, -1.0]
        M[2, [2, 3]] = [0.5, 0.5]
        assert dependent_rows(sparse.csr_matrix(M), self.NODE_CELL).size == 0

    def test_combination_of_neighbours(self):
        M = np.zeros((3, 8))
        M[0, [2, 3]] = [1.0, 2.0]
        M[1, [3]] = [4.0]
        M[2, [2, 3]] = [3.0, 10.0]
        dropped = dependent_rows(sparse.csr_matrix(M), self.NODE_CELL)
        assert dropped.size == 1

    def test_wide_rows_are_not_checked(self):
        M = np.zeros((2, 8))
        M[0] = 1.0
        M[1] = 2.0
        assert dependent_rows(sparse.csr_matrix(M), self.NODE_CELL, max_cells=2).size == 0

    def test_discretized_circle_has_independent_rows(self, circle_problem):
        disc = circle_problem([FieldSpec('T', 1)], q=1)
        op = disc['T'].extraction
        assert dependent_rows(op.matrix, disc.basis.node_cell).size == 0
