"""
imig - Benchmark Case Tests
Fast checks run by default; full convergence sweeps are marked slow.
"""
import dataclasses
import logging

import numpy as np
import pytest

from imig.config import Config
from imig.exceptions import InputError
from imig.models import CaseConfig
from imig.services.bench import (
    BAR_LENGTH, ConvergenceTable, conforming_dofs, fit_rate, inclusion_displacement, pairwise_rates, run_bar2d,
    run_eigenstrain, run_thermoelastic, setup_bar2d, setup_case, setup_eigenstrain, solve_thermoelastic,
    setup_thermoelastic,
)
from imig.services.extraction import dependent_rows
from imig.services.geometry import inclusion_field
from imig.services.physics import assemble_coupling, assemble_elastic, assemble_thermal
from imig.services.solver import reduce, solve_monolithic, solve_reduced


def config_for(case, **overrides):
    return dataclasses.replace(CaseConfig.default(case), **overrides)


@pytest.fixture
def small_composite():
    """Unit square with one disc of the first material, on a 5x5 grid."""
    return inclusion_field(((0.5, 0.5, 0.3),), (0.0, 0.0), (0.25, 0.25), (5, 5))


class TestRates:
    def test_quadratic_errors(self):
        h = np.array([0.4, 0.2, 0.1, 0.05])
        assert fit_rate(h, 3.0 * h ** 2) == pytest.approx(2.0)

    def test_fit_uses_finest_rows(self):
        h = np.array([1.0, 0.5, 0.25, 0.125])
        errors = np.array([5.0, 0.5 ** 3, 0.25 ** 3, 0.125 ** 3])
        assert fit_rate(h, errors) == pytest.approx(3.0)

    def test_noisy_cubic_errors(self):
        rng = np.random.default_rng(7)
        h = 0.5 ** np.arange(6)
        errors = 2.0 * h ** 3 * (1.0 + 0.01 * rng.standard_normal(h.size))
        assert abs(fit_rate(h, errors) - 3.0) < 0.05

    def test_too_few_rows(self):
        with pytest.raises(InputError):
            fit_rate([1.0, 0.5], [1.0, 0.25])

    def test_non_positive_error(self):
        with pytest.raises(InputError):
            fit_rate([1.0, 0.5, 0.25], [1.0, 0.0, 0.1])

    def test_non_monotone_errors_warn(self, caplog):
        with caplog.at_level(logging.WARNING):
            fit_rate([1.0, 0.5, 0.25], [1.0, 2.0, 0.5])
        assert 'monoton' in caplog.text

    def test_pairwise_rates(self):
        rates = pairwise_rates([1.0, 0.5, 0.25], [1.0, 0.25, 0.0625])
        assert np.isnan(rates[0])
        assert rates[1:] == pytest.approx([2.0, 2.0])

    def test_table(self):
        table = ConvergenceTable('bar2d', 'T')
        table.add(1.0, 10, 8, 1.0, 2.0)
        table.add(0.5, 30, 20, 0.25, 1.0)
        assert table.rates() is None
        rows = table.rows()
        assert rows[1]['rate_L2'] == pytest.approx(2.0)
        assert rows[1]['rate_H1'] == pytest.approx(1.0)
        table.add(0.25, 90, 60, 0.0625, 0.5)
        assert table.rates() == pytest.approx((2.0, 1.0))


class TestBar:
    def test_areas_are_exact(self):
        setup = setup_bar2d(CaseConfig.default('bar2d'), 1.0)
        areas = setup.discretization.mesh.material_areas()
        assert areas.sum() == pytest.approx(BAR_LENGTH, abs=1e-9)
        assert areas[1:] == pytest.approx([1.25, 2.5, 1.25], abs=1e-9)

    def test_boundary_tags(self):
        setup = setup_bar2d(CaseConfig.default('bar2d'), 1.0)
        tags = set(setup.discretization.mesh.boundary.tags.tolist())
        assert tags == {'bottom', 'top', 'left', 'right'}

    def test_exact_solution_is_continuous_in_flux(self):
        setup = setup_bar2d(CaseConfig.default('bar2d'), 1.0)
        kappa = setup.thermal.conductivity
        # kappa * T is the same function in every material
        point = np.array([[1.0, 0.5]])
        flux = [kappa[m] * setup.exact(point, np.array([m]))[0] for m in (1, 2, 3)]
        assert flux == pytest.approx([flux[0]] * 3)

    def test_short_sweep(self):
        result = run_bar2d(CaseConfig.default('bar2d'), sweep=[1.0, 0.5])
        assert len(result.table.h) == 2
        assert result.table.L2[1] < result.table.L2[0]
        assert result.table.rates() is None
        assert result.solution.temperature.shape == (result.setup.discretization.basis.n_nodes,)

    def test_setup_case_defaults_to_coarsest(self):
        config = config_for('bar2d', h=[1.0, 0.5])
        disc = setup_case(config).discretization
        assert disc.decomposition.sequence.levels[0].n_cells == (6, 4)


class TestEigenstrain:
    def test_closed_form(self):
        materials = CaseConfig.default('eigenstrain').material_list()
        c1, exact, gradient = inclusion_displacement(materials)
        (l1, m1), (_, m2) = materials[0].lame, materials[1].lame
        assert c1 == pytest.approx((l1 + m1) * 0.1 / (l1 + m1 + m2))
        rim = np.array([[0.3, 0.4]])
        assert exact[1](rim) == pytest.approx(exact[2](rim))
        far = np.array([[3.0, 4.0]])
        assert np.linalg.norm(exact[2](far)) == pytest.approx(c1 * 0.25 / 5.0)
        assert np.trace(gradient[2](far)[0]) == pytest.approx(0.0, abs=1e-15)

    def test_foreground_refinement_keeps_background(self):
        coarse = setup_eigenstrain(CaseConfig.default('eigenstrain'), 0.625)
        fine = setup_eigenstrain(config_for('eigenstrain', fg_depth=2), 0.625)
        u0, u2 = coarse.discretization['u'], fine.discretization['u']
        assert u0.n_background == u2.n_background
        assert fine.discretization.mesh.n_cells > coarse.discretization.mesh.n_cells
        area = np.pi * 0.25 / 4
        err0 = abs(coarse.discretization.mesh.material_areas()[1] - area)
        err2 = abs(fine.discretization.mesh.material_areas()[1] - area)
        assert err2 < err0

    def test_symmetry_conditions(self):
        setup = setup_eigenstrain(CaseConfig.default('eigenstrain'), 0.625)
        dirichlet = setup.elastic.dirichlet
        assert dirichlet['box_left'].component == 'x'
        assert dirichlet['box_bottom'].component == 'y'
        assert dirichlet['box_right'].component == 'all'


class TestThermoelastic:
    def test_conforming_dofs(self):
        assert conforming_dofs((4, 4), 0) == (25, 162)
        assert conforming_dofs((4, 4), 1) == (81, 578)

    def test_dof_report(self, small_composite):
        config = config_for('thermoelastic', h=[0.25], depth_T=1, depth_u=1)
        result = run_thermoelastic(config, level_set=small_composite)
        assert [row['depth'] for row in result.dof_report] == [0, 1]
        assert result.dof_report[0]['conforming_T'] == 25
        assert result.dof_report[1]['conforming_T'] == 81
        assert result.dof_report[1]['background_T'] > result.dof_report[0]['background_T']
        assert set(result.derived) == {'grad_T_norm', 'u_norm', 'mech_strain_norm', 'stress_norm'}
        assert np.all(np.isfinite(result.solution.displacement))

    def test_temperature_range(self, small_composite):
        setup = setup_thermoelastic(config_for('thermoelastic', h=[0.25], depth_T=0, depth_u=0),
                                    level_set=small_composite)
        solution, _ = solve_thermoelastic(setup)
        nodes = setup.discretization.basis.nodes
        T = solution.temperature
        assert np.mean(T[nodes[:, 1] < 0.1]) > np.mean(T[nodes[:, 1] > 0.9])
        assert -1.0 < T.min() and T.max() < 101.0

    def test_level_set_sign_selects_material(self, small_composite):
        setup = setup_thermoelastic(config_for('thermoelastic', h=[0.25], depth_T=0, depth_u=0),
                                    level_set=small_composite)
        areas = setup.discretization.mesh.material_areas()
        assert areas[1] == pytest.approx(np.pi * 0.09, rel=0.2)
        assert areas[1:].sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
class TestConvergence:
    @pytest.mark.parametrize('p', [1, 2])
    def test_bar_rates(self, p):
        result = run_bar2d(config_for('bar2d', p_T=p, q=p))
        l2, h1 = result.table.rates()
        assert p + 1 - 0.25 <= l2 <= p + 1 + 0.35
        assert p - 0.25 <= h1 <= p + 0.35

    def test_linear_bar_on_finest_mesh_is_solvable(self):
        setup = setup_bar2d(config_for('bar2d', p_T=1, q=1), Config.BAR_SWEEP[-1])
        disc = setup.discretization
        extraction = disc['T'].extraction
        assert dependent_rows(extraction.matrix, disc.basis.node_cell).size == 0
        A, b = assemble_thermal(setup.thermal, disc.mesh, disc.basis)
        _, residual = solve_reduced(reduce(A, b, extraction, 'thermal'))
        assert residual < Config.RESIDUAL_TOLERANCE

    def test_eigenstrain_needs_foreground_refinement(self):
        sweep = Config.EIGENSTRAIN_SWEEP
        plain = run_eigenstrain(CaseConfig.default('eigenstrain'), sweep=sweep)
        refined = run_eigenstrain(config_for('eigenstrain', fg_depth=3), sweep=sweep)
        assert plain.table.rates()[0] <= 2.3
        assert refined.table.rates()[0] >= 2.7

    def test_composite_dofs_and_coupled_solves(self):
        config = config_for('thermoelastic', h=[0.1], depth_T=2, depth_u=2)
        result = run_thermoelastic(config)
        deepest = result.dof_report[-1]
        assert deepest['n_T'] < deepest['conforming_T']
        assert deepest['n_u'] < deepest['conforming_u']

        setup = result.setup
        disc = setup.discretization
        A_T, b_T = assemble_thermal(setup.thermal, disc.mesh, disc.basis)
        A_u, b_u = assemble_elastic(setup.elastic, disc.mesh, disc.basis)
        C = assemble_coupling(setup.elastic, disc.mesh, disc.basis)
        monolithic = solve_monolithic(reduce(A_T, b_T, disc['T'].extraction), reduce(A_u, b_u, disc['u'].extraction),
                                      C, setup.elastic.reference_temperature)
        scale = np.abs(result.solution.d_u).max()
        assert np.max(np.abs(monolithic.d_u - result.solution.d_u)) < 1e-8 * scale
