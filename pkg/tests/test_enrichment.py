"""
imig - Heaviside Enrichment Tests
"""
import numpy as np
import pytest
from scipy import sparse

from imig.models import Material
from imig.services.enrichment import build_enriched_space, enumerate_subregions, support_cells
from imig.services.foreground import build_decomposition, build_foreground_mesh
from imig.services.geometry import PhaseConfig, discretize_lsf
from imig.services.hierarchy import LevelSequence, build_thb
from imig.services.spline import TensorBSplineSpace


def flood_fill_counts(background, mesh):
    """Connected same-material regions per function support, by explicit graph search."""
    Z = support_cells(background, mesh).tocsc()
    counts = []
    for k in range(Z.shape[1]):
        cells = set(Z.indices[Z.indptr[k]:Z.indptr[k + 1]].tolist())
        seen = set()
        regions = 0
        for start in sorted(cells):
            if start in seen:
                continue
            regions += 1
            seen.add(start)
            stack = [start]
            while stack:
                cell = stack.pop()
                for nb in mesh.adjacency[cell].indices.tolist():
                    if nb in cells and nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
        counts.append(regions)
    return np.array(counts)


@pytest.fixture
def strip_problem():
    """
    3x3 unit grid holding a thin vertical strip of a second material at
    1.25 < x < 1.75; the host on both sides of it is disconnected.
    """
    grid = TensorBSplineSpace.uniform((3, 3), 1, (0.0, 0.0), (1.0, 1.0))
    left = discretize_lsf(lambda x, y: x - 1.25, grid, name='left')
    right = discretize_lsf(lambda x, y: 1.75 - x, grid, name='right')
    materials = [Material('host'), Material('strip')]
    phases = PhaseConfig(2, {1: 'host', 2: 'host', 3: 'strip'}, materials)
    decomp = build_decomposition((3, 3), (0.0, 0.0), (1.0, 1.0))
    mesh = build_foreground_mesh(decomp, [left, right], phases)
    background = build_thb(LevelSequence.uniform(grid))
    return background, mesh


class TestEnrichedSpace:
    def test_function_across_the_strip_has_three_copies(self, strip_problem):
        background, mesh = strip_problem
        space = build_enriched_space(background, mesh)
        # bilinear functions are numbered ix + 4 * iy
        assert space.counts[4] == 1   # support 0 < x < 1, host only
        assert space.counts[5] == 3   # left host, strip, right host
        assert space.counts[6] == 3
        assert space.counts[7] == 1

    def test_counts_match_flood_fill(self, strip_problem):
        background, mesh = strip_problem
        space = build_enriched_space(background, mesh)
        assert np.array_equal(space.counts, flood_fill_counts(background, mesh))

    def test_counts_match_flood_fill_on_refined_circle(self, circle_problem):
        from imig.services.discretization import FieldSpec

        disc = circle_problem([FieldSpec('T', 2, depth=1)], q=2)
        field = disc['T']
        assert np.array_equal(field.enriched.counts, flood_fill_counts(field.background, disc.mesh))
        assert field.enriched.counts.max() >= 2

    def test_indicators_partition_each_support(self, strip_problem):
        background, mesh = strip_problem
        space = build_enriched_space(background, mesh)
        n = space.n_functions
        owner = sparse.csr_matrix(
            (np.ones(n), (space.base_function, np.arange(n))), shape=(background.n_functions, n)
        )
        covered = (owner @ space.indicators.astype(float)).toarray()
        support = support_cells(background, mesh).T.toarray()
        assert np.array_equal(covered, support)

    def test_indicator_regions_are_single_material(self, strip_problem):
        background, mesh = strip_problem
        space = build_enriched_space(background, mesh)
        for i in range(space.n_functions):
            assert np.unique(mesh.material[space.indicator(i)]).size == 1

    def test_levels_are_one_based(self, strip_problem):
        background, mesh = strip_problem
        space = build_enriched_space(background, mesh)
        copies = space.level[space.base_function == 5]
        assert copies.tolist() == [1, 2, 3]

    def test_function_lookup(self, strip_problem):
        background, mesh = strip_problem
        space = build_enriched_space(background, mesh)
        i = int(np.flatnonzero(space.base_function == 5)[1])
        cell = int(space.indicator(i)[0])
        assert space.function_of([5], [cell]).tolist() == [i]
        # function 0 does not reach the right column
        far = int(np.argmax(mesh.centroids[:, 0]))
        assert space.function_of([0], [far]).tolist() == [-1]

    def test_functions_outside_material_are_dropped(self, circle_lsf, circle_phases, two_materials):
        lsf = circle_lsf(8)
        phases = circle_phases(two_materials, void_outside=True)
        decomp = build_decomposition((8, 8), (-1.0, -1.0), lsf.spacing)
        mesh = build_foreground_mesh(decomp, [lsf], phases)
        grid = TensorBSplineSpace.uniform((8, 8), 1, (-1.0, -1.0), lsf.spacing)
        space = build_enriched_space(build_thb(LevelSequence.uniform(grid)), mesh)
        assert space.counts[0] == 0
        assert np.sum(space.counts == 0) > 0
        assert space.counts.max() == 1


class TestSubregions:
    def test_ordered_by_smallest_cell(self, strip_problem):
        _, mesh = strip_problem
        regions = enumerate_subregions(np.arange(mesh.n_cells), mesh)
        assert len(regions) == 3
        firsts = [r.min() for r in regions]
        assert firsts == sorted(firsts)
        assert sum(r.size for r in regions) == mesh.n_cells

    def test_empty(self, strip_problem):
        _, mesh = strip_problem
        assert enumerate_subregions([], mesh) == []
