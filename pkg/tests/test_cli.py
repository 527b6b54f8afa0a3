"""
imig - Command Line Tests
"""
import csv

import pytest

BAR_CONFIG = 'case = "bar2d"\nh = [1.0, 0.5, 0.25]\n'


@pytest.fixture
def bar_config(tmp_path):
    path = tmp_path / 'bar.toml'
    path.write_text(BAR_CONFIG)
    return str(path)


def test_app_creation(app):
    """Test that the app is created successfully."""
    assert app is not None
    assert app.config['TESTING'] is True
    assert app.config['EXPORT_XLSX'] is False


def test_commands_are_registered(app):
    commands = app.cli.list_commands(None)
    assert {'run', 'sweep', 'export-mesh', 'dump-operator'} <= set(commands)


def test_run_bar(runner, bar_config, tmp_path):
    out = tmp_path / 'out'
    result = runner.invoke(args=['run', 'bar2d', '--config', bar_config, '--out', str(out)])
    assert result.exit_code == 0, result.output
    assert 'fitted rates' in result.output
    with open(out / 'bar2d_convergence.csv') as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r['h']) for r in rows] == [1.0, 0.5, 0.25]
    assert rows[0]['rate_L2'] == ''
    assert (out / 'bar2d_solution.vtk').exists()
    assert not (out / 'bar2d_convergence.xlsx').exists()


def test_export_mesh(runner, tmp_path):
    result = runner.invoke(args=['export-mesh', 'eigenstrain', '--h', '0.625', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    text = (tmp_path / 'eigenstrain_foreground.vtk').read_text()
    assert text.startswith('# vtk DataFile')
    assert 'material' in text


def test_dump_operator(runner, tmp_path):
    result = runner.invoke(args=['dump-operator', 'bar2d', '--h', '1.0', '--field', 'T', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    header = (tmp_path / 'bar2d_T_extraction.txt').read_text().splitlines()[0].split()
    assert len(header) == 3


def test_unknown_field(runner, tmp_path):
    result = runner.invoke(args=['dump-operator', 'bar2d', '--h', '1.0', '--field', 'u', '--out', str(tmp_path)])
    assert result.exit_code == 1
    assert "no field 'u'" in result.output


def test_invalid_config(runner, tmp_path):
    path = tmp_path / 'bad.toml'
    path.write_text('case = "bar2d"\nh = [0.25, 0.5]\n')
    result = runner.invoke(args=['run', 'bar2d', '--config', str(path), '--out', str(tmp_path)])
    assert result.exit_code == 1
    assert 'decreasing' in result.output


def test_case_mismatch(runner, bar_config, tmp_path):
    result = runner.invoke(args=['run', 'eigenstrain', '--config', bar_config, '--out', str(tmp_path)])
    assert result.exit_code == 1
    assert "not 'eigenstrain'" in result.output


def test_unknown_case(runner):
    result = runner.invoke(args=['run', 'beam'])
    assert result.exit_code != 0
