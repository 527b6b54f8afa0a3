"""
imig - Configuration Tests
Case file parsing, form validation and material constants.
"""
import os

import pytest

from imig.exceptions import ConfigError
from imig.forms import CaseConfigForm
from imig.models import CASE_DEFAULTS, CaseConfig, Material

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', 'configs')


class TestCaseConfig:
    @pytest.mark.parametrize('case', sorted(CASE_DEFAULTS))
    def test_defaults_are_valid(self, case):
        config = CaseConfig.default(case)
        assert config.case == case
        assert config.q >= max(config.p_T, config.p_u)
        assert config.h == sorted(config.h, reverse=True)

    @pytest.mark.parametrize('case', sorted(CASE_DEFAULTS))
    def test_shipped_files_load(self, case):
        config = CaseConfig.from_toml(os.path.join(CONFIG_DIR, f'{case}.toml'))
        assert config.case == case
        if case == 'thermoelastic':
            assert os.path.isabs(config.lsf_file)
            assert os.path.exists(config.lsf_file)

    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / 'bar.toml'
        path.write_text('case = "bar2d"\nh = [0.5, 0.25]\n[materials.mat2]\nconductivity = 0.5\n')
        config = CaseConfig.from_toml(path)
        assert config.h == [0.5, 0.25]
        assert config.materials['mat2']['conductivity'] == 0.5
        assert config.materials['mat1']['conductivity'] == 1.0

    def test_penalty_default_scales_with_degree(self):
        config = CaseConfig.default('eigenstrain')
        assert config.penalty_u(20.0) == pytest.approx(80.0)
        config.beta_u = 5.0
        assert config.penalty_u(20.0) == 5.0

    @pytest.mark.parametrize('overrides', [
        {'q': 1, 'p_u': 2},
        {'h': [0.5, 1.0]},
        {'h': [1.0, -0.5]},
        {'depth_u': 9},
        {'depth_u': 3, 'fg_depth': 3},
        {'p_u': 3, 'q': 3},
        {'ring_u': -1},
        {'beta_u': -2.0},
        {'lsf_file': 'grid.txt'},
        {'speed': 3},
    ])
    def test_invalid_configurations(self, overrides):
        with pytest.raises(ConfigError):
            CaseConfig.from_mapping({'case': 'eigenstrain', **overrides})

    def test_bar_angle_range(self):
        with pytest.raises(ConfigError):
            CaseConfig.from_mapping({'case': 'bar2d', 'angle': 120.0})

    def test_unknown_case(self):
        with pytest.raises(ConfigError, match='Unknown case'):
            CaseConfig.from_mapping({'case': 'beam'})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match='not found'):
            CaseConfig.from_toml(tmp_path / 'none.toml')

    def test_malformed_file(self, tmp_path):
        path = tmp_path / 'broken.toml'
        path.write_text('case = "bar2d\n')
        with pytest.raises(ConfigError, match='Cannot parse'):
            CaseConfig.from_toml(path)

    def test_max_depth_is_enforced(self):
        with pytest.raises(ConfigError):
            CaseConfig.from_mapping({'case': 'thermoelastic'}, max_depth=2)


class TestCaseConfigForm:
    def test_collects_every_error(self):
        data = dict(CASE_DEFAULTS['eigenstrain'], case='eigenstrain', q=1, h=[0.1, 0.2])
        form = CaseConfigForm(data=data)
        assert not form.validate()
        assert set(form.errors) >= {'q', 'h'}
        summary = form.error_summary()
        assert 'q:' in summary and 'h:' in summary


class TestMaterial:
    def test_lame_from_engineering_constants(self):
        m = Material('steel', youngs_modulus=210.0, poisson_ratio=0.3)
        lam, mu = m.lame
        assert lam == pytest.approx(210.0 * 0.3 / (1.3 * 0.4))
        assert mu == pytest.approx(210.0 / 2.6)
        assert m.youngs == 210.0

    def test_youngs_from_lame(self):
        m = Material('sample', lame_lambda=2.0, lame_mu=1.0)
        assert m.youngs == pytest.approx(1.0 * 8.0 / 3.0)
        assert m.is_elastic

    def test_both_forms_rejected(self):
        with pytest.raises(ConfigError):
            Material('x', youngs_modulus=1.0, poisson_ratio=0.2, lame_lambda=1.0, lame_mu=1.0)

    def test_incomplete_constants(self):
        with pytest.raises(ConfigError):
            Material('x', youngs_modulus=1.0)

    def test_non_positive_conductivity(self):
        with pytest.raises(ConfigError):
            Material('x', conductivity=0.0)

    def test_thermal_only(self):
        m = Material('x')
        assert not m.is_elastic
        with pytest.raises(ConfigError):
            m.lame

    def test_unknown_keys(self):
        with pytest.raises(ConfigError, match='unknown keys'):
            Material.from_dict('x', {'conductivity': 1.0, 'colour': 'red'})
