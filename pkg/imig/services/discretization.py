"""
imig - Discretization Pipeline
===============================
Wires the stages that turn level sets and a phase map into solvable
function spaces:

    background spaces (refined around interfaces, one per field)
      -> decomposition mesh (union of the field hierarchies + foreground levels)
      -> foreground mesh and DG basis
      -> enriched spaces
      -> extraction operators
"""

import logging
from dataclasses import dataclass

import numpy as np

from imig.config import Config
from imig.exceptions import ConfigError
from imig.services.enrichment import build_enriched_space
from imig.services.extraction import build_extraction, vector_extraction
from imig.services.foreground import build_decomposition, build_foreground_basis, build_foreground_mesh
from imig.services.hierarchy import build_thb, refine_around
from imig.services.spline import TensorBSplineSpace
from imig.utils.decorators import log_stage

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FieldSpec:
    """One solution field: spline degree, local refinement and component count."""
    name: str
    degree: int
    depth: int = 0
    ring: int = None
    n_components: int = 1


@dataclass(frozen=True, eq=False)
class FieldSpace:
    spec: FieldSpec
    sequence: object    # LevelSequence
    background: object  # THBSpace
    enriched: object    # EnrichedSpace
    extraction: object  # ExtractionOperator, interleaved for vector fields

    @property
    def n_background(self):
        return self.background.n_functions

    @property
    def n_dofs(self):
        return self.extraction.n_functions


@dataclass(frozen=True, eq=False)
class Discretization:
    level_sets: tuple
    phases: object
    decomposition: object
    mesh: object
    basis: object
    fields: dict

    def __getitem__(self, name):
        return self.fields[name]

    def dof_counts(self):
        return {name: space.n_dofs for name, space in self.fields.items()}


def grid_size(lower, upper, h):
    """Cells per direction covering [lower, upper] with spacing h (the box grows to fit)."""
    extent = np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)
    return tuple(int(n) for n in np.maximum(np.ceil(extent / h - 1e-12), 1))


@log_stage
def build_discretization(n_cells, origin, spacing, level_sets, phases, specs, q,
                         fg_depth=0, fg_ring=Config.FOREGROUND_RING, samples=Config.REFINEMENT_SAMPLES,
                         max_depth=Config.MAX_DEPTH, snap=Config.SNAP_TOLERANCE, h_cap=Config.H_CAP_FACTOR):
    """
    Build every field space of a problem on one shared background grid.

    Args:
        n_cells, origin, spacing: level-0 background grid
        level_sets: LevelSetField list (phase bit j = field j)
        phases: PhaseConfig
        specs: FieldSpec list
        q: foreground Lagrange degree, at least every field degree

    Raises:
        ConfigError: q below a field degree, duplicate field names
    """
    specs = list(specs)
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f"Duplicate field names {names}")
    if any(q < s.degree for s in specs):
        raise ConfigError(f"Foreground degree {q} is below a field degree {[s.degree for s in specs]}")

    def classify(points):
        return phases.material_at(level_sets, points, sampled=True)

    sequences = {}
    for spec in specs:
        base = TensorBSplineSpace.uniform(n_cells, spec.degree, origin, spacing)
        sequences[spec.name] = refine_around(base, classify, spec.depth, ring=spec.ring,
                                             samples=samples, max_depth=max_depth)

    decomposition = build_decomposition(
        n_cells, origin, spacing, list(sequences.values()), level_sets, phases,
        fg_depth=fg_depth, fg_ring=fg_ring, samples=samples, max_depth=max_depth,
    )
    mesh = build_foreground_mesh(decomposition, level_sets, phases, snap=snap, h_cap=h_cap)
    basis = build_foreground_basis(mesh, q)

    fields = {}
    for spec in specs:
        background = build_thb(sequences[spec.name])
        enriched = build_enriched_space(background, mesh)
        extraction = build_extraction(enriched, basis)
        if spec.n_components > 1:
            extraction = vector_extraction(extraction, spec.n_components)
        fields[spec.name] = FieldSpace(spec, sequences[spec.name], background, enriched, extraction)
        logger.info(
            f"Field '{spec.name}': degree {spec.degree}, {background.n_functions} background functions, "
            f"{extraction.n_functions} dofs"
        )
    return Discretization(tuple(level_sets), phases, decomposition, mesh, basis, fields)
