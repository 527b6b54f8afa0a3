"""
imig - Foreground Mesh Tests
"""
import numpy as np
import pytest

from imig.exceptions import ConfigError, DegenerateEdgeError
from imig.services.foreground import (
    BOX_TAGS, build_decomposition, build_foreground_basis, build_foreground_mesh, edge_intersection,
    facet_quadrature, triangulate_cell,
)
from imig.services.geometry import LevelSetField, cell_level_set, discretize_lsf
from imig.services.spline import TensorBSplineSpace

BOX_ORIGIN = (-1.0, -1.0)
RADIUS = 0.55


def _signed_areas(split):
    areas = []
    for cell in split.cells:
        p = split.points[list(cell)]
        x, y = p[:, 0], p[:, 1]
        areas.append(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    return np.array(areas)


def _phase_areas(split):
    areas = _signed_areas(split)
    return {int(ph): areas[split.phases == ph].sum() for ph in np.unique(split.phases)}


@pytest.fixture
def circle_mesh(circle_lsf, circle_phases, two_materials):
    def make(n=8, fg_depth=0, void_outside=False):
        lsf = circle_lsf(n)
        phases = circle_phases(two_materials, void_outside=void_outside)
        decomp = build_decomposition((n, n), BOX_ORIGIN, lsf.spacing, fields=[lsf], phases=phases,
                                     fg_depth=fg_depth)
        return build_foreground_mesh(decomp, [lsf], phases)
    return make


class TestEdgeIntersection:
    def test_sign_change(self):
        assert edge_intersection(-1.0, 3.0) == pytest.approx(0.25)

    def test_iso_level(self):
        assert edge_intersection(0.0, 2.0, 1.5) == pytest.approx(0.75)

    def test_no_crossing(self):
        assert edge_intersection(1.0, 2.0) is None
        assert edge_intersection(0.0, 2.0) is None

    def test_degenerate_edge(self):
        with pytest.raises(DegenerateEdgeError):
            edge_intersection(0.0, 0.0)


class TestTriangulateCell:
    def test_uncut_cell_stays_quad(self):
        split = triangulate_cell([0, 0, 1, 1], np.array([[1.0], [2.0], [3.0], [0.5]]))
        assert split.cells == [(0, 1, 2, 3)]
        assert split.phases.tolist() == [1]

    def test_single_cut_conserves_area(self):
        values = np.array([[-0.3], [0.7], [0.7], [-0.3]])
        split = triangulate_cell([0, 0, 1, 1], values)
        areas = _signed_areas(split)
        assert np.all(areas > 0)
        assert areas.sum() == pytest.approx(1.0, abs=1e-14)
        assert _phase_areas(split)[0] == pytest.approx(0.3, abs=1e-14)

    def test_two_level_sets(self):
        corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        values = np.column_stack([corners[:, 0] - 0.3, corners[:, 1] - 0.6])
        split = triangulate_cell([0, 0, 1, 1], values)
        areas = _phase_areas(split)
        assert areas[0] == pytest.approx(0.18, abs=1e-14)
        assert areas[1] == pytest.approx(0.42, abs=1e-14)
        assert areas[2] == pytest.approx(0.12, abs=1e-14)
        assert areas[3] == pytest.approx(0.28, abs=1e-14)

    def test_cut_through_vertices(self):
        # zero set along the diagonal: only the fan is needed
        values = np.array([[-1.0], [0.0], [1.0], [0.0]])
        split = triangulate_cell([0, 0, 1, 1], values)
        assert len(split.cells) == 4
        assert _signed_areas(split).sum() == pytest.approx(1.0)
        assert sorted(split.phases.tolist()) == [0, 0, 1, 1]

    def test_snapping_removes_near_touch(self):
        values = np.array([[1e-14], [1.0], [1.0], [-1.0]])
        split = triangulate_cell([0, 0, 1, 1], values, tolerances=1e-10)
        assert _signed_areas(split).sum() == pytest.approx(1.0)
        assert np.all(_signed_areas(split) > 0)


    def test_curved_cut_points_lie_on_the_bilinear(self):
        values = np.array([[-0.6], [0.5], [0.9], [-0.1]])
        split = triangulate_cell([0, 0, 1, 1], values)
        cuts = split.points[5:]
        assert len(cuts) > 2
        phi = cell_level_set([0, 0, 1, 1], values[:, 0])
        assert np.max(np.abs(phi.interpolate(cuts))) < 1e-12
        assert np.all(split.values[5:, 0] == 0.0)
        assert _signed_areas(split).sum() == pytest.approx(1.0, abs=1e-14)


class TestForegroundMesh:
    def test_area_is_conserved(self, circle_mesh):
        mesh = circle_mesh()
        assert mesh.area.sum() == pytest.approx(4.0, abs=1e-12)

    def test_inclusion_area(self, circle_mesh):
        areas = circle_mesh().material_areas()
        exact = np.pi * RADIUS ** 2
        assert areas[1] < exact
        assert areas[1] == pytest.approx(exact, rel=0.05)

    def test_interface_facets(self, circle_mesh):
        mesh = circle_mesh()
        ifc = mesh.interfaces
        assert ifc.n_facets > 0
        assert np.all(ifc.materials[:, 0] < ifc.materials[:, 1])
        midpoints = ifc.points.mean(axis=1)
        # normals point out of the lower material (the disc)
        assert np.all(np.sum(ifc.normals * midpoints, axis=1) > 0)
        assert np.allclose(np.linalg.norm(ifc.normals, axis=1), 1.0)
        assert ifc.lengths.sum() == pytest.approx(2 * np.pi * RADIUS, rel=0.05)

    def test_interface_facets_lie_on_the_level_set(self, circle_lsf, circle_mesh):
        ends = circle_mesh().interfaces.points.reshape(-1, 2)
        assert np.max(np.abs(circle_lsf(8).evaluate(ends))) < 1e-12

    def test_grid_level_set_facets_under_refinement(self, circle_lsf, circle_phases, two_materials):
        sampled = circle_lsf(8)
        lsf = LevelSetField(sampled.values, sampled.origin, sampled.spacing, name='circle')
        phases = circle_phases(two_materials)
        decomp = build_decomposition((8, 8), BOX_ORIGIN, lsf.spacing, fields=[lsf], phases=phases, fg_depth=2)
        ifc = build_foreground_mesh(decomp, [lsf], phases).interfaces
        assert np.max(np.abs(lsf.evaluate(ifc.points.reshape(-1, 2)))) < 1e-12
        assert ifc.lengths.sum() == pytest.approx(2 * np.pi * RADIUS, rel=0.05)

    def test_affine_interface_midpoints(self, two_materials, circle_phases):
        space = TensorBSplineSpace.uniform((4, 4), 1, BOX_ORIGIN, (0.5, 0.5))
        lsf = discretize_lsf(lambda x, y: 0.3 * x - 0.7 * y + 0.11, space, name='line')
        phases = circle_phases(two_materials)
        decomp = build_decomposition((4, 4), BOX_ORIGIN, lsf.spacing, fields=[lsf], phases=phases, fg_depth=1)
        ifc = build_foreground_mesh(decomp, [lsf], phases).interfaces
        mid = ifc.points.mean(axis=1)
        assert np.max(np.abs(0.3 * mid[:, 0] - 0.7 * mid[:, 1] + 0.11)) < 1e-12

    def test_flipped_interfaces_swap_sides(self, circle_mesh):
        ifc = circle_mesh().interfaces
        flipped = ifc.flipped()
        assert np.array_equal(flipped.cells, ifc.cells[:, ::-1])
        assert np.array_equal(flipped.materials, ifc.materials[:, ::-1])
        assert np.array_equal(flipped.normals, -ifc.normals)
        assert np.allclose(flipped.lengths, ifc.lengths)
        midpoints = flipped.points.mean(axis=1)
        # flipped normals point into the disc
        assert np.all(np.sum(flipped.normals * midpoints, axis=1) < 0)

    def test_box_facets(self, circle_mesh):
        mesh = circle_mesh()
        bnd = mesh.boundary
        assert set(bnd.tags.tolist()) == set(BOX_TAGS)
        assert bnd.lengths.sum() == pytest.approx(8.0)
        for tag, normal in (('box_left', (-1, 0)), ('box_top', (0, 1))):
            sel = bnd.select([tag])
            assert bnd.lengths[sel].sum() == pytest.approx(2.0)
            assert np.allclose(bnd.normals[sel], normal)

    def test_void_cells_are_dropped(self, circle_mesh):
        mesh = circle_mesh(void_outside=True)
        assert set(np.unique(mesh.material).tolist()) == {1}
        assert mesh.area.sum() == pytest.approx(np.pi * RADIUS ** 2, rel=0.05)
        bnd = mesh.boundary
        assert set(bnd.tags.tolist()) == {'circle'}
        midpoints = bnd.points.mean(axis=1)
        assert np.all(np.sum(bnd.normals * midpoints, axis=1) > 0)
        assert mesh.interfaces.n_facets == 0

    def test_foreground_refinement(self, circle_mesh):
        coarse = circle_mesh()
        fine = circle_mesh(fg_depth=2)
        assert fine.level.max() == 2
        assert fine.n_cells > coarse.n_cells
        assert fine.area.sum() == pytest.approx(4.0, abs=1e-12)
        exact = np.pi * RADIUS ** 2
        assert abs(fine.material_areas()[1] - exact) < abs(coarse.material_areas()[1] - exact)

    def test_adjacency_links_same_material_only(self, circle_mesh):
        mesh = circle_mesh()
        rows, cols = mesh.adjacency.nonzero()
        assert rows.size > 0
        assert np.all(mesh.material[rows] == mesh.material[cols])

    def test_cell_sizes_are_positive(self, circle_mesh):
        mesh = circle_mesh()
        assert np.all(mesh.h > 0)
        assert np.all(mesh.h <= 0.25 + 1e-12)

    def test_foreground_refinement_needs_geometry(self):
        with pytest.raises(ConfigError):
            build_decomposition((4, 4), (0.0, 0.0), (1.0, 1.0), fg_depth=1)


class TestForegroundBasis:
    @pytest.mark.parametrize('q', [1, 2])
    def test_volume_quadrature_integrates_area(self, circle_mesh, q):
        mesh = circle_mesh()
        basis = build_foreground_basis(mesh, q)
        total = sum(ch.weights.sum() for ch in basis.volume_chunks(2 * q))
        assert total == pytest.approx(4.0, abs=1e-12)

    def test_node_counts(self, circle_mesh):
        mesh = circle_mesh()
        basis = build_foreground_basis(mesh, 2)
        quads = int(np.sum(mesh.cell_type == 4))
        tris = int(np.sum(mesh.cell_type == 3))
        assert basis.n_nodes == 9 * quads + 6 * tris

    def test_trace_is_partition_of_unity(self, circle_mesh):
        mesh = circle_mesh()
        basis = build_foreground_basis(mesh, 2)
        cells = np.arange(mesh.n_cells)
        dofs, values, grads = basis.trace(cells, mesh.centroids[:, None, :])
        assert np.allclose(values.sum(axis=-1), 1.0)
        assert np.allclose(grads.sum(axis=2), 0.0, atol=1e-9)
        assert np.all(dofs[mesh.cell_type == 4] >= 0)

    def test_unsupported_degree(self, circle_mesh):
        with pytest.raises(ConfigError):
            build_foreground_basis(circle_mesh(), 3)

    def test_facet_quadrature_length(self):
        segments = np.array([[[0.0, 0.0], [3.0, 4.0]]])
        points, weights = facet_quadrature(segments, 4)
        assert weights.sum() == pytest.approx(5.0)
        assert np.allclose(points[0, :, 1], points[0, :, 0] * 4.0 / 3.0)
