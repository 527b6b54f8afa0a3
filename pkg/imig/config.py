"""
imig - Application Configuration
=================================
Centralized configuration for all environments. Environment variables (or a
.env file) override output locations and logging; numerical defaults used by
the services live here too so library calls and CLI runs agree.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    """Base configuration shared across all environments."""

    # ---------- Output ----------
    OUTPUT_DIR = os.environ.get('IMIG_OUTPUT_DIR', 'results')
    EXPORT_XLSX = os.environ.get('IMIG_EXPORT_XLSX', 'true').lower() == 'true'
    LOG_LEVEL = os.environ.get('IMIG_LOG_LEVEL', '')

    # ---------- Geometry ----------
    SNAP_TOLERANCE = 1e-10       # relative to the LSF grid range
    H_CAP_FACTOR = 1e-3          # lower bound on foreground h, relative to its decomposition cell
    REFINEMENT_SAMPLES = 4       # lattice per cell used to detect interface cells
    FOREGROUND_RING = 0

    # ---------- Spaces ----------
    MAX_DEPTH = 5                # maximum number of hierarchy levels
    REFINEMENT_RING = None       # None -> spline degree
    PRUNE_TOLERANCE = 1e-14
    DEPENDENCE_TOLERANCE = 1e-10  # relative pivot below which a local extraction row is dependent
    DEPENDENCE_MAX_CELLS = 2      # rows touching at most this many foreground cells are rank-checked

    # ---------- Nitsche ----------
    PENALTY_FACTOR = 20.0        # beta = PENALTY_FACTOR * q**2

    # ---------- Solver ----------
    RESIDUAL_TOLERANCE = 1e-10
    SINGULAR_RESIDUAL = 1e-6     # relative residual treated as a singular system

    # ---------- Bench Defaults ----------
    BAR_SWEEP = [1.0, 0.5, 0.25, 0.125, 0.0625]
    EIGENSTRAIN_SWEEP = [0.625 * f for f in (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125)]
    COMPOSITE_LSF_FILE = os.environ.get(
        'IMIG_COMPOSITE_LSF',
        os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data', 'composite_lsf.txt')
    )


class DevelopmentConfig(Config):
    """Development configuration with verbose logging."""
    DEBUG = True


class ProductionConfig(Config):
    """Production configuration for batch runs."""
    DEBUG = False


class TestingConfig(Config):
    """Testing configuration with short sweeps."""
    TESTING = True
    DEBUG = False
    EXPORT_XLSX = False
    BAR_SWEEP = [1.0, 0.5, 0.25]
    EIGENSTRAIN_SWEEP = [0.625, 0.3125, 0.15625]


# Configuration dictionary for easy lookup
config_by_name = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
