"""
imig - Export Service
======================
Writes benchmark results to disk:
- convergence tables as CSV and as a formatted Excel workbook (openpyxl)
- the thermoelastic DOF report
- foreground meshes and DG nodal fields as legacy ASCII VTK (meshio)
- extraction operators as COO text
"""

import csv
import logging
import os

import meshio
import numpy as np
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side

from imig.services.extraction import write_operator
from imig.utils.elements import VTK_CELL_TYPES

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ('h', 'dofs', 'L2', 'H1', 'rate_L2', 'rate_H1')
DOF_COLUMNS = ('depth', 'n_T', 'n_u', 'background_T', 'background_u', 'conforming_T', 'conforming_u')


# =====================================================
# EXCEL STYLES
# =====================================================

HEADER_FONT = Font(name='Calibri', bold=True, color='FFFFFF', size=11)
HEADER_FILL = PatternFill(start_color='1F4E79', end_color='1F4E79', fill_type='solid')
HEADER_ALIGNMENT = Alignment(horizontal='center', vertical='center', wrap_text=True)

DATA_FONT = Font(name='Calibri', size=10)
DATA_ALIGNMENT = Alignment(horizontal='right', vertical='top')

THIN_BORDER = Border(
    left=Side(style='thin'),
    right=Side(style='thin'),
    top=Side(style='thin'),
    bottom=Side(style='thin')
)

# Rates within this distance of the expected order are highlighted
RATE_FILLS = {
    'ok': PatternFill(start_color='E0FFE0', end_color='E0FFE0', fill_type='solid'),
    'off': PatternFill(start_color='FFE0E0', end_color='FFE0E0', fill_type='solid'),
}

NUMBER_FORMATS = {'h': '0.000000', 'dofs': '0', 'L2': '0.000E+00', 'H1': '0.000E+00',
                  'rate_L2': '0.00', 'rate_H1': '0.00'}


# =====================================================
# CONVERGENCE TABLES
# =====================================================

def _clean(value):
    """NaN rates are written as empty cells."""
    if isinstance(value, float) and np.isnan(value):
        return ''
    return value


def write_convergence_csv(path, table):
    with open(path, 'w', newline='') as fh:
        writer = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        writer.writeheader()
        for row in table.rows():
            writer.writerow({k: _clean(row[k]) for k in TABLE_COLUMNS})
    logger.info(f"Wrote convergence table to {path}")
    return path


def write_convergence_xlsx(path, tables, expected=None):
    """
    One worksheet per table, header styled and frozen.

    Args:
        tables: {sheet title: ConvergenceTable}
        expected: optional {sheet title: (L2 order, H1 order)} used to colour the rate cells
    """
    wb = Workbook()
    wb.remove(wb.active)
    for title, table in tables.items():
        ws = wb.create_sheet(title=title[:31])
        _write_header(ws, TABLE_COLUMNS)
        orders = (expected or {}).get(title)
        for row_idx, row in enumerate(table.rows(), 2):
            for col_idx, key in enumerate(TABLE_COLUMNS, 1):
                cell = ws.cell(row=row_idx, column=col_idx, value=_clean(row[key]))
                cell.font = DATA_FONT
                cell.alignment = DATA_ALIGNMENT
                cell.border = THIN_BORDER
                cell.number_format = NUMBER_FORMATS[key]
            if orders:
                for col_idx, key, order in ((5, 'rate_L2', orders[0]), (6, 'rate_H1', orders[1])):
                    rate = row[key]
                    if not np.isnan(rate):
                        ok = abs(rate - order) <= 0.35
                        ws.cell(row=row_idx, column=col_idx).fill = RATE_FILLS['ok' if ok else 'off']

        fitted = table.rates()
        if fitted:
            last = len(table.h) + 3
            ws.cell(row=last, column=1, value='fitted').font = HEADER_FONT
            ws.cell(row=last, column=1).fill = HEADER_FILL
            ws.cell(row=last, column=5, value=fitted[0]).number_format = '0.000'
            ws.cell(row=last, column=6, value=fitted[1]).number_format = '0.000'

        _auto_adjust_columns(ws)
        ws.freeze_panes = 'A2'
    wb.save(path)
    logger.info(f"Wrote {len(tables)} convergence sheet(s) to {path}")
    return path


def write_dof_report(path, rows):
    """Thermoelastic DOF counts per local refinement depth (CSV)."""
    with open(path, 'w', newline='') as fh:
        writer = csv.DictWriter(fh, fieldnames=DOF_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in DOF_COLUMNS})
    logger.info(f"Wrote DOF report to {path}")
    return path


def write_dof_report_xlsx(path, rows):
    wb = Workbook()
    ws = wb.active
    ws.title = "DOFs"
    _write_header(ws, DOF_COLUMNS)
    for row_idx, row in enumerate(rows, 2):
        for col_idx, key in enumerate(DOF_COLUMNS, 1):
            cell = ws.cell(row=row_idx, column=col_idx, value=int(row[key]))
            cell.font = DATA_FONT
            cell.alignment = DATA_ALIGNMENT
            cell.border = THIN_BORDER
    _auto_adjust_columns(ws)
    ws.freeze_panes = 'A2'
    wb.save(path)
    return path


def write_summary(path, entries):
    """Sweep summary: one row per entry with its fitted rates."""
    columns = ('label', 'rows', 'dofs', 'rate_L2', 'rate_H1')
    with open(path, 'w', newline='') as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for label, table in entries.items():
            rates = table.rates() or (float('nan'), float('nan'))
            writer.writerow({
                'label': label, 'rows': len(table.h), 'dofs': table.dofs[-1] if table.dofs else '',
                'rate_L2': _clean(rates[0]), 'rate_H1': _clean(rates[1]),
            })
    logger.info(f"Wrote sweep summary to {path}")
    return path


# =====================================================
# MESH AND FIELD FILES
# =====================================================

def foreground_vtk(mesh, basis, point_data=None):
    """
    meshio.Mesh of the foreground basis: every cell with its own DG nodes, so
    material discontinuities stay sharp.
    """
    points = np.column_stack([basis.nodes, np.zeros(basis.n_nodes)])
    cells, material, phase, level = [], [], [], []
    for block in basis.blocks:
        cell_type = VTK_CELL_TYPES[(block.n_vertices, basis.degree)]
        cells.append((cell_type, block.dofs.astype(np.int64)))
        material.append(mesh.material[block.cells].astype(np.int64))
        phase.append(mesh.phase[block.cells].astype(np.int64))
        level.append(mesh.level[block.cells].astype(np.int64))
    data = {}
    for name, values in (point_data or {}).items():
        values = np.asarray(values, dtype=float)
        if values.ndim == 2 and values.shape[1] == 2:
            values = np.column_stack([values, np.zeros(values.shape[0])])
        data[name] = values
    return meshio.Mesh(points, cells, point_data=data,
                       cell_data={'material': material, 'phase': phase, 'level': level})


def write_foreground(path, mesh, basis, point_data=None):
    """Legacy ASCII VTK file of the foreground mesh and optional nodal fields."""
    vtk = foreground_vtk(mesh, basis, point_data)
    meshio.write(path, vtk, file_format='vtk', binary=False)
    logger.info(f"Wrote foreground mesh ({mesh.n_cells} cells, {basis.n_nodes} nodes) to {path}")
    return path


def solution_point_data(solution, derived=None):
    data = {}
    if solution.temperature is not None:
        data['T'] = solution.temperature
    if solution.displacement is not None:
        data['u'] = solution.displacement
    for key, name in (('grad_T_norm', 'grad_T'), ('u_norm', 'u_magnitude'), ('mech_strain_norm', 'eps_m')):
        if derived and key in derived:
            data[name] = derived[key]
    return data


# =====================================================
# CASE OUTPUTS
# =====================================================

def write_case_outputs(result, out_dir, export_xlsx=True, prefix=None):
    """
    Write every file of a case result into out_dir.

    Returns:
        List of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    prefix = prefix or result.case
    written = []
    if result.table is not None:
        written.append(write_convergence_csv(os.path.join(out_dir, f'{prefix}_convergence.csv'), result.table))
        if export_xlsx:
            written.append(write_convergence_xlsx(os.path.join(out_dir, f'{prefix}_convergence.xlsx'),
                                                  {prefix: result.table}))
    if result.dof_report:
        written.append(write_dof_report(os.path.join(out_dir, f'{prefix}_dofs.csv'), result.dof_report))
        if export_xlsx:
            written.append(write_dof_report_xlsx(os.path.join(out_dir, f'{prefix}_dofs.xlsx'), result.dof_report))
    if result.setup is not None and result.solution is not None:
        disc = result.setup.discretization
        written.append(write_foreground(
            os.path.join(out_dir, f'{prefix}_solution.vtk'), disc.mesh, disc.basis,
            solution_point_data(result.solution, result.derived),
        ))
    return written


def dump_operator(path, field_space):
    """COO dump of a field's extraction operator."""
    return write_operator(path, field_space.extraction)


# =====================================================
# HELPER FUNCTIONS
# =====================================================

def _write_header(ws, headers):
    for col_idx, header in enumerate(headers, 1):
        cell = ws.cell(row=1, column=col_idx, value=header)
        cell.font = HEADER_FONT
        cell.fill = HEADER_FILL
        cell.alignment = HEADER_ALIGNMENT
        cell.border = THIN_BORDER


def _auto_adjust_columns(ws, max_width=30):
    """Column widths from the longest cell, capped."""
    for col in ws.columns:
        col_letter = col[0].column_letter
        max_length = max(len(str(cell.value if cell.value is not None else '')) for cell in col)
        ws.column_dimensions[col_letter].width = min(max_length + 4, max_width)
