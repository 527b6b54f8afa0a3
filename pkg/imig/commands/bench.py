"""
imig - Bench Commands
======================
Command-line surface of the benchmark cases, registered on the application
as top-level commands:
- run:           one case (sweep or thermoelastic solve) with its output files
- sweep:         a case over several degrees and/or foreground depths
- export-mesh:   the foreground mesh of one discretization
- dump-operator: the extraction operator of one field
"""

import dataclasses
import logging
import os

import click
from flask import Blueprint, current_app

from imig.exceptions import ConfigError
from imig.models import CaseConfig
from imig.services import bench, export_service
from imig.utils.decorators import handle_case_errors

bench_bp = Blueprint('bench', __name__, cli_group=None)

logger = logging.getLogger(__name__)

CASE_CHOICE = click.Choice(['bar2d', 'eigenstrain', 'thermoelastic'])


# =====================================================
# HELPERS
# =====================================================

def _load_config(case, config_path):
    """Case configuration from a TOML file, or the defaults with the app's sweep."""
    max_depth = current_app.config['MAX_DEPTH']
    if config_path:
        config = CaseConfig.from_toml(config_path, max_depth=max_depth)
        if config.case != case:
            raise ConfigError(f"{config_path} configures case '{config.case}', not '{case}'")
        return config
    data = {'case': case}
    if case == 'bar2d':
        data['h'] = list(current_app.config['BAR_SWEEP'])
    elif case == 'eigenstrain':
        data['h'] = list(current_app.config['EIGENSTRAIN_SWEEP'])
    elif case == 'thermoelastic':
        data['lsf_file'] = current_app.config['COMPOSITE_LSF_FILE']
    return CaseConfig.from_mapping(data, max_depth=max_depth)


def _output_dir(config, out):
    path = out or config.output_dir or current_app.config['OUTPUT_DIR']
    os.makedirs(path, exist_ok=True)
    return path


def _report_rates(table):
    rates = table.rates()
    if rates:
        click.echo(f"  fitted rates: L2 {rates[0]:.3f}, H1 {rates[1]:.3f}")


def _report_table(table):
    click.echo(f"{'h':>10} {'dofs':>8} {'L2':>12} {'H1':>12} {'rate_L2':>8} {'rate_H1':>8}")
    for row in table.rows():
        click.echo(
            f"{row['h']:>10.5g} {row['dofs']:>8d} {row['L2']:>12.4e} {row['H1']:>12.4e} "
            f"{row['rate_L2']:>8.3f} {row['rate_H1']:>8.3f}"
        )
    _report_rates(table)


# =====================================================
# COMMANDS
# =====================================================

@bench_bp.cli.command('run')
@click.argument('case', type=CASE_CHOICE)
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='TOML case configuration.')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory.')
@handle_case_errors
def run_case(case, config_path, out):
    """Run one benchmark case and write its tables and field files."""
    config = _load_config(case, config_path)
    out_dir = _output_dir(config, out)
    result = bench.run_case(config, max_depth=current_app.config['MAX_DEPTH'])

    click.echo(f"Case {case}:")
    if result.table is not None:
        _report_table(result.table)
    for row in result.dof_report:
        click.echo(
            f"  depth {row['depth']}: n_T {row['n_T']} (conforming {row['conforming_T']}), "
            f"n_u {row['n_u']} (conforming {row['conforming_u']})"
        )
    written = export_service.write_case_outputs(result, out_dir, export_xlsx=current_app.config['EXPORT_XLSX'])
    for path in written:
        click.echo(f"  wrote {path}")


@bench_bp.cli.command('sweep')
@click.argument('case', type=click.Choice(['bar2d', 'eigenstrain']))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='TOML case configuration.')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory.')
@click.option('--degree', 'degrees', type=int, multiple=True, help='Spline (and foreground) degree; repeatable.')
@click.option('--fg-depth', 'fg_depths', type=int, multiple=True, help='Foreground-only depth; repeatable.')
@handle_case_errors
def sweep_case(case, config_path, out, degrees, fg_depths):
    """Run a convergence sweep for every degree / foreground depth combination."""
    base = _load_config(case, config_path)
    out_dir = _output_dir(base, out)
    max_depth = current_app.config['MAX_DEPTH']

    tables = {}
    for p in degrees or (None,):
        for fg in fg_depths or (None,):
            overrides = {}
            if p is not None:
                overrides.update({'p_T': p, 'q': p} if case == 'bar2d' else {'p_u': p, 'q': p})
            if fg is not None:
                overrides['fg_depth'] = fg
            data = dataclasses.asdict(base)
            data.update(overrides)
            config = CaseConfig.from_mapping(data, max_depth=max_depth)
            label = f"p{config.p_T if case == 'bar2d' else config.p_u}_fg{config.fg_depth}"

            click.echo(f"Case {case} [{label}]:")
            result = bench.run_case(config, max_depth=max_depth)
            _report_table(result.table)
            export_service.write_case_outputs(result, out_dir, export_xlsx=False, prefix=f'{case}_{label}')
            tables[label] = result.table

    export_service.write_summary(os.path.join(out_dir, f'{case}_summary.csv'), tables)
    if current_app.config['EXPORT_XLSX']:
        export_service.write_convergence_xlsx(os.path.join(out_dir, f'{case}_sweep.xlsx'), tables)
    click.echo(f"Wrote {len(tables)} tables to {out_dir}")


@bench_bp.cli.command('export-mesh')
@click.argument('case', type=CASE_CHOICE)
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='TOML case configuration.')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory.')
@click.option('--h', 'h', type=float, help='Background mesh size (default: the first of the sweep).')
@handle_case_errors
def export_mesh(case, config_path, out, h):
    """Write the foreground mesh of a case with material, phase and level cell data."""
    config = _load_config(case, config_path)
    out_dir = _output_dir(config, out)
    setup = bench.setup_case(config, h, max_depth=current_app.config['MAX_DEPTH'])
    disc = setup.discretization
    path = export_service.write_foreground(os.path.join(out_dir, f'{case}_foreground.vtk'), disc.mesh, disc.basis)
    click.echo(f"Foreground mesh: {disc.mesh.n_cells} cells, {disc.basis.n_nodes} nodes -> {path}")


@bench_bp.cli.command('dump-operator')
@click.argument('case', type=CASE_CHOICE)
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='TOML case configuration.')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory.')
@click.option('--field', 'field_name', default=None, help='Field name (T or u; default: the first field).')
@click.option('--h', 'h', type=float, help='Background mesh size (default: the first of the sweep).')
@handle_case_errors
def dump_operator(case, config_path, out, field_name, h):
    """Write the extraction operator of one field as COO triplets."""
    config = _load_config(case, config_path)
    out_dir = _output_dir(config, out)
    setup = bench.setup_case(config, h, max_depth=current_app.config['MAX_DEPTH'])
    disc = setup.discretization
    name = field_name or next(iter(disc.fields))
    if name not in disc.fields:
        raise ConfigError(f"Case {case} has no field '{name}' (fields: {sorted(disc.fields)})")
    path = export_service.dump_operator(os.path.join(out_dir, f'{case}_{name}_extraction.txt'), disc[name])
    op = disc[name].extraction
    click.echo(f"Extraction operator {name}: {op.n_functions} x {op.matrix.shape[1]} -> {path}")
