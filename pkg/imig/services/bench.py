"""
imig - Benchmark Cases
=======================
Setup and solution of the shipped benchmark cases:

- bar2d:          three-material rotated bar, steady conduction with a
                  manufactured solution, mesh-size sweep
- eigenstrain:    circular inclusion with uniform eigenstrain in a quarter
                  plate, closed-form displacement, mesh-size sweep
- thermoelastic:  heated compression-shear test of a two-phase composite read
                  from a level set grid, staggered thermoelastic solve and DOF
                  report per local refinement depth

Every runner returns a CaseResult; writing files is left to export_service.
"""

import logging
from dataclasses import dataclass, field
from math import cos, pi, radians, sin

import numpy as np

from imig.config import Config
from imig.exceptions import ConfigError, InputError
from imig.services.discretization import FieldSpec, build_discretization, grid_size
from imig.services.geometry import PhaseConfig, discretize_lsf, read_lsf_grid
from imig.services.physics import (
    DirichletCondition, ElasticProblem, ThermalProblem, assemble_coupling, assemble_elastic, assemble_thermal,
)
from imig.services.solver import derived_fields, error_norms, reduce, solve_staggered
from imig.services.spline import TensorBSplineSpace

logger = logging.getLogger(__name__)

# ---------- Bar ----------
BAR_LENGTH = 5.0
BAR_HEIGHT = 1.0
BAR_BOX = ((-1.0, -0.5), (5.0, 3.0))
BAR_PHASES = (15, 31, 63)

# ---------- Eigenstrain inclusion ----------
PLATE_BOX = ((0.0, 0.0), (5.0, 5.0))
INCLUSION_RADIUS = 0.5


# =====================================================
# RESULTS
# =====================================================

def fit_rate(h, errors, n_fit=3):
    """
    Least-squares slope of log(error) against log(h) over the n_fit finest rows.

    Raises:
        InputError: fewer than n_fit rows, or non-positive sizes/errors
    """
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if h.size < n_fit or errors.size != h.size:
        raise InputError(f"Rate fit needs at least {n_fit} rows, got {h.size}")
    if np.any(h <= 0) or np.any(errors <= 0):
        raise InputError("Rate fit needs positive mesh sizes and errors")
    order = np.argsort(h)[::-1]
    if np.any(np.diff(errors[order]) > 0):
        logger.warning(f"Errors do not decrease monotonically with h: {errors[order].tolist()}")
    finest = order[-n_fit:]
    return float(np.polyfit(np.log(h[finest]), np.log(errors[finest]), 1)[0])


def pairwise_rates(h, errors):
    """Observed order between consecutive rows; NaN for the first row."""
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    rates = np.full(h.size, np.nan)
    rates[1:] = np.log(errors[1:] / errors[:-1]) / np.log(h[1:] / h[:-1])
    return rates


@dataclass
class ConvergenceTable:
    """Errors of one field over a mesh-size sweep."""
    case: str
    field: str
    h: list = field(default_factory=list)
    dofs: list = field(default_factory=list)
    background: list = field(default_factory=list)
    L2: list = field(default_factory=list)
    H1: list = field(default_factory=list)

    def add(self, h, dofs, background, l2, h1):
        self.h.append(float(h))
        self.dofs.append(int(dofs))
        self.background.append(int(background))
        self.L2.append(float(l2))
        self.H1.append(float(h1))

    def rows(self):
        rate_l2 = pairwise_rates(self.h, self.L2)
        rate_h1 = pairwise_rates(self.h, self.H1)
        return [
            {'h': self.h[i], 'dofs': self.dofs[i], 'L2': self.L2[i], 'H1': self.H1[i],
             'rate_L2': rate_l2[i], 'rate_H1': rate_h1[i]}
            for i in range(len(self.h))
        ]

    def rates(self):
        """Fitted (L2, H1) rates, or None when the sweep is too short."""
        if len(self.h) < 3:
            return None
        return fit_rate(self.h, self.L2), fit_rate(self.h, self.H1)


@dataclass
class CaseSetup:
    """A discretized case ready for assembly."""
    discretization: object
    thermal: ThermalProblem = None
    elastic: ElasticProblem = None
    exact: object = None
    exact_gradient: object = None


@dataclass
class CaseResult:
    case: str
    config: object
    table: ConvergenceTable = None
    setup: CaseSetup = None
    solution: object = None
    derived: dict = field(default_factory=dict)
    dof_report: list = field(default_factory=list)


# =====================================================
# BAR 2D
# =====================================================

def _plane(a, b, c):
    return lambda x, y: a * x + b * y + c


def bar_level_sets(space, angle):
    """Edge and interface level sets of the rotated bar, in phase bit order."""
    c, s = cos(radians(angle)), sin(radians(angle))
    planes = (
        ('bottom', _plane(-s, c, 0.0)),
        ('top', _plane(s, -c, BAR_HEIGHT)),
        ('left', _plane(c, s, 0.0)),
        ('right', _plane(-c, -s, BAR_LENGTH)),
        ('ifc1', _plane(c, s, -BAR_LENGTH / 4)),
        ('ifc2', _plane(c, s, -3 * BAR_LENGTH / 4)),
    )
    return [discretize_lsf(phi, space, name=name) for name, phi in planes]


def bar_exact(conductivity, angle):
    """Manufactured temperature T = sin(4 pi x'/L) / kappa, its gradient and source."""
    c, s = cos(radians(angle)), sin(radians(angle))
    k = 4 * pi / BAR_LENGTH

    def along(points):
        return points[:, 0] * c + points[:, 1] * s

    def exact(points, material):
        return np.sin(k * along(points)) / conductivity[material]

    def gradient(points, material):
        g = k * np.cos(k * along(points)) / conductivity[material]
        return g[:, None] * np.array([c, s])[None, :]

    def source(points, material):
        return k ** 2 * np.sin(k * along(points))

    return exact, gradient, source


def setup_bar2d(config, h, max_depth=Config.MAX_DEPTH):
    materials = config.material_list()
    if len(materials) != 3:
        raise ConfigError(f"The bar case needs three materials, got {len(materials)}")
    n_cells = grid_size(*BAR_BOX, h)
    space = TensorBSplineSpace.uniform(n_cells, 1, BAR_BOX[0], (h, h))
    level_sets = bar_level_sets(space, config.angle)
    phases = PhaseConfig(6, dict(zip(BAR_PHASES, [m.name for m in materials])), materials)

    disc = build_discretization(
        n_cells, BAR_BOX[0], (h, h), level_sets, phases,
        [FieldSpec('T', config.p_T, config.depth_T, config.ring_T)],
        config.q, fg_depth=config.fg_depth, max_depth=max_depth,
    )
    thermal = ThermalProblem.from_materials(materials, beta_dirichlet=config.penalty_T(Config.PENALTY_FACTOR),
                                            beta_interface=config.penalty_T(Config.PENALTY_FACTOR))
    exact, gradient, source = bar_exact(thermal.conductivity, config.angle)
    thermal.source = source
    thermal.dirichlet = {'left': exact, 'right': exact}
    return CaseSetup(disc, thermal=thermal, exact=exact, exact_gradient=gradient)


def run_bar2d(config, sweep=None, max_depth=Config.MAX_DEPTH):
    """Thermal convergence sweep of the three-material bar."""
    table = ConvergenceTable('bar2d', 'T')
    setup = solution = None
    for h in sweep or config.h:
        setup = setup_bar2d(config, h, max_depth)
        disc = setup.discretization
        area = disc.mesh.area.sum()
        if abs(area - BAR_LENGTH * BAR_HEIGHT) > 1e-10:
            logger.warning(f"Bar area {area:.12f} differs from {BAR_LENGTH * BAR_HEIGHT}")
        A, b = assemble_thermal(setup.thermal, disc.mesh, disc.basis)
        solution = solve_staggered(thermal=reduce(A, b, disc['T'].extraction, 'thermal'))
        l2, h1 = error_norms(disc.mesh, disc.basis, solution.temperature, setup.exact, setup.exact_gradient)
        table.add(h, disc['T'].n_dofs, disc['T'].n_background, l2, h1)
        logger.info(f"bar2d h={h:g}: {disc['T'].n_dofs} dofs, L2 {l2:.4e}, H1 {h1:.4e}")
    return CaseResult('bar2d', config, table, setup, solution)


# =====================================================
# EIGENSTRAIN INCLUSION
# =====================================================

def inclusion_displacement(materials, radius=INCLUSION_RADIUS):
    """
    Closed-form displacement of a circular inclusion with uniform eigenstrain
    in an unbounded matrix, per material id (1 inclusion, 2 matrix):

        u = C1 x            (r <= R)
        u = C1 R^2 x / r^2  (r >= R),   C1 = (l1 + m1) e0 / (l1 + m1 + m2)
    """
    inclusion, matrix = materials
    lam1, mu1 = inclusion.lame
    _, mu2 = matrix.lame
    c1 = (lam1 + mu1) * inclusion.eigenstrain / (lam1 + mu1 + mu2)
    r2 = radius ** 2

    def inside(points):
        return c1 * points

    def outside(points):
        return c1 * r2 * points / np.sum(points ** 2, axis=1)[:, None]

    def inside_gradient(points):
        return np.broadcast_to(c1 * np.eye(2), (points.shape[0], 2, 2)).copy()

    def outside_gradient(points):
        rr = np.sum(points ** 2, axis=1)
        outer = np.einsum('ni,nj->nij', points, points)
        return c1 * r2 * (np.eye(2)[None] / rr[:, None, None] - 2.0 * outer / rr[:, None, None] ** 2)

    return c1, {1: inside, 2: outside}, {1: inside_gradient, 2: outside_gradient}


def setup_eigenstrain(config, h, max_depth=Config.MAX_DEPTH):
    materials = config.material_list()
    if len(materials) != 2:
        raise ConfigError(f"The eigenstrain case needs two materials, got {len(materials)}")
    n_cells = grid_size(*PLATE_BOX, h)
    space = TensorBSplineSpace.uniform(n_cells, 1, PLATE_BOX[0], (h, h))
    circle = discretize_lsf(lambda x, y: np.hypot(x, y) - INCLUSION_RADIUS, space, name='circle')
    phases = PhaseConfig(1, {0: materials[0].name, 1: materials[1].name}, materials)

    disc = build_discretization(
        n_cells, PLATE_BOX[0], (h, h), [circle], phases,
        [FieldSpec('u', config.p_u, config.depth_u, config.ring_u, n_components=2)],
        config.q, fg_depth=config.fg_depth, max_depth=max_depth,
    )
    c1, exact, gradient = inclusion_displacement(materials)
    logger.info(f"Inclusion displacement factor C1 = {c1:.7f}")
    far = exact[2]
    beta = config.penalty_u(Config.PENALTY_FACTOR)
    elastic = ElasticProblem.from_materials(
        materials,
        dirichlet={
            'box_left': DirichletCondition(0.0, 'x'),
            'box_bottom': DirichletCondition(0.0, 'y'),
            'box_right': DirichletCondition(lambda p, m: far(p)),
            'box_top': DirichletCondition(lambda p, m: far(p)),
        },
        beta_dirichlet=beta, beta_interface=beta,
    )
    return CaseSetup(disc, elastic=elastic, exact=exact, exact_gradient=gradient)


def run_eigenstrain(config, sweep=None, max_depth=Config.MAX_DEPTH):
    """Displacement convergence sweep of the eigenstrain inclusion."""
    table = ConvergenceTable('eigenstrain', 'u')
    setup = solution = None
    for h in sweep or config.h:
        setup = setup_eigenstrain(config, h, max_depth)
        disc = setup.discretization
        A, b = assemble_elastic(setup.elastic, disc.mesh, disc.basis)
        solution = solve_staggered(elastic=reduce(A, b, disc['u'].extraction, 'elastic'))
        l2, h1 = error_norms(disc.mesh, disc.basis, solution.displacement, setup.exact, setup.exact_gradient)
        table.add(h, disc['u'].n_dofs, disc['u'].n_background, l2, h1)
        logger.info(f"eigenstrain h={h:g} fg_depth={config.fg_depth}: {disc['u'].n_dofs} dofs, "
                    f"L2 {l2:.4e}, H1 {h1:.4e}")
    return CaseResult('eigenstrain', config, table, setup, solution)


# =====================================================
# THERMOELASTIC COMPOSITE
# =====================================================

def setup_thermoelastic(config, h=None, depth_T=None, depth_u=None, level_set=None, max_depth=Config.MAX_DEPTH):
    """
    Discretize the composite specimen covered by the level set grid.

    The first material fills the positive side of the level set, the second
    the negative side.
    """
    materials = config.material_list()
    if len(materials) != 2:
        raise ConfigError(f"The thermoelastic case needs two materials, got {len(materials)}")
    lsf = level_set or read_lsf_grid(config.lsf_file or Config.COMPOSITE_LSF_FILE, name='interface')
    h = config.h[-1] if h is None else h
    nx, ny = lsf.shape
    origin = lsf.origin
    upper = (origin[0] + (nx - 1) * lsf.spacing[0], origin[1] + (ny - 1) * lsf.spacing[1])
    n_cells = grid_size(origin, upper, h)
    extent = np.asarray(upper) - np.asarray(origin)
    spacing = tuple(extent / np.asarray(n_cells))
    if not np.allclose(spacing, h, rtol=1e-9):
        logger.warning(f"Mesh size adjusted from {h:g} to {spacing} to fit the specimen")
    phases = PhaseConfig(1, {1: materials[0].name, 0: materials[1].name}, materials)

    disc = build_discretization(
        n_cells, origin, spacing, [lsf], phases,
        [
            FieldSpec('T', config.p_T, config.depth_T if depth_T is None else depth_T, config.ring_T),
            FieldSpec('u', config.p_u, config.depth_u if depth_u is None else depth_u, config.ring_u, 2),
        ],
        config.q, fg_depth=config.fg_depth, max_depth=max_depth,
    )
    loads = config.loads
    beta_T = config.penalty_T(Config.PENALTY_FACTOR)
    beta_u = config.penalty_u(Config.PENALTY_FACTOR)
    thermal = ThermalProblem.from_materials(
        materials,
        dirichlet={'box_top': float(loads['T_top']), 'box_bottom': float(loads['T_bottom'])},
        beta_dirichlet=beta_T, beta_interface=beta_T,
    )
    elastic = ElasticProblem.from_materials(
        materials,
        dirichlet={
            'box_top': DirichletCondition(np.asarray(loads['u_top'], dtype=float)),
            'box_bottom': DirichletCondition(np.asarray(loads.get('u_bottom', [0.0, 0.0]), dtype=float)),
        },
        reference_temperature=float(loads.get('T0', 0.0)),
        beta_dirichlet=beta_u, beta_interface=beta_u,
    )
    return CaseSetup(disc, thermal=thermal, elastic=elastic)


def conforming_dofs(n_cells, depth):
    """Uniform conforming Lagrange counts (T bilinear, u biquadratic) at the finest resolution."""
    nx, ny = (n * 2 ** depth for n in n_cells)
    return (nx + 1) * (ny + 1), 2 * (2 * nx + 1) * (2 * ny + 1)


def solve_thermoelastic(setup):
    """Staggered solve of a thermoelastic setup; returns (SolutionFields, derived nodal fields)."""
    disc = setup.discretization
    mesh, basis = disc.mesh, disc.basis
    A_T, b_T = assemble_thermal(setup.thermal, mesh, basis)
    A_u, b_u = assemble_elastic(setup.elastic, mesh, basis)
    C = assemble_coupling(setup.elastic, mesh, basis)
    thermal = reduce(A_T, b_T, disc['T'].extraction, 'thermal')
    elastic = reduce(A_u, b_u, disc['u'].extraction, 'elastic')
    solution = solve_staggered(thermal, elastic, C, setup.elastic.reference_temperature)
    derived = derived_fields(mesh, basis, solution.temperature, solution.displacement, setup.elastic)
    return solution, derived


def run_thermoelastic(config, level_set=None, max_depth=Config.MAX_DEPTH):
    """
    DOF report over local refinement depths 0..max(depth_T, depth_u) and the
    staggered solve at the deepest one.
    """
    lsf = level_set or read_lsf_grid(config.lsf_file or Config.COMPOSITE_LSF_FILE, name='interface')
    deepest = max(config.depth_T, config.depth_u)
    report = []
    setup = None
    for depth in range(deepest + 1):
        setup = setup_thermoelastic(config, depth_T=min(depth, config.depth_T), depth_u=min(depth, config.depth_u),
                                    level_set=lsf, max_depth=max_depth)
        disc = setup.discretization
        n_cells = disc.decomposition.sequence.levels[0].n_cells
        conf_T, conf_u = conforming_dofs(n_cells, depth)
        report.append({
            'depth': depth,
            'n_T': disc['T'].n_dofs, 'n_u': disc['u'].n_dofs,
            'background_T': disc['T'].n_background, 'background_u': disc['u'].n_background,
            'conforming_T': conf_T, 'conforming_u': conf_u,
        })
        logger.info(f"thermoelastic depth {depth}: n_T {disc['T'].n_dofs} (conforming {conf_T}), "
                    f"n_u {disc['u'].n_dofs} (conforming {conf_u})")

    solution, derived = solve_thermoelastic(setup)
    logger.info(f"thermoelastic: max |u| {derived['u_norm'].max():.4e}, "
                f"max |eps_m| {derived['mech_strain_norm'].max():.4e}")
    return CaseResult('thermoelastic', config, None, setup, solution, derived, report)


# =====================================================
# DISPATCH
# =====================================================

SETUPS = {'bar2d': setup_bar2d, 'eigenstrain': setup_eigenstrain, 'thermoelastic': setup_thermoelastic}
RUNNERS = {'bar2d': run_bar2d, 'eigenstrain': run_eigenstrain, 'thermoelastic': run_thermoelastic}


def run_case(config, max_depth=Config.MAX_DEPTH, sweep=None):
    if config.case == 'thermoelastic':
        return run_thermoelastic(config, max_depth=max_depth)
    return RUNNERS[config.case](config, sweep=sweep, max_depth=max_depth)


def setup_case(config, h=None, max_depth=Config.MAX_DEPTH):
    """Discretization of a case at one mesh size (default: the coarsest of the sweep)."""
    h = config.h[0] if h is None else h
    return SETUPS[config.case](config, h, max_depth=max_depth)
