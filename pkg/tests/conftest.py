"""
imig - Test Fixtures
Application, CLI runner and small discretized problems shared by the suite.
"""
import os

import numpy as np
import pytest

os.environ['IMIG_ENV'] = 'testing'

from imig import create_app
from imig.models import Material
from imig.services.discretization import build_discretization
from imig.services.geometry import PhaseConfig, discretize_lsf
from imig.services.spline import TensorBSplineSpace

BOX_ORIGIN = (-1.0, -1.0)
BOX_SIZE = 2.0
RADIUS = 0.55
BOX_TAGS = ('box_left', 'box_right', 'box_top', 'box_bottom')


@pytest.fixture
def app():
    """Create a test app instance."""
    app = create_app('testing')
    with app.app_context():
        yield app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def two_materials():
    """Inclusion and host with identical constants (an interface without a jump)."""
    return [
        Material('inner', conductivity=1.0, lame_lambda=2.0, lame_mu=1.0),
        Material('outer', conductivity=1.0, lame_lambda=2.0, lame_mu=1.0),
    ]


@pytest.fixture
def circle_lsf():
    """Factory: signed distance to a circle, sampled on an n x n grid of the box."""
    def make(n=8, radius=RADIUS):
        h = BOX_SIZE / n
        space = TensorBSplineSpace.uniform((n, n), 1, BOX_ORIGIN, (h, h))
        return discretize_lsf(lambda x, y: np.hypot(x, y) - radius, space, name='circle')
    return make


@pytest.fixture
def circle_phases():
    """Factory: disc -> first material, rest -> second material (or void)."""
    def make(materials, void_outside=False):
        phase_map = {0: materials[0].name}
        if not void_outside:
            phase_map[1] = materials[1].name
        return PhaseConfig(1, phase_map, materials)
    return make


@pytest.fixture
def circle_problem(circle_lsf, circle_phases, two_materials):
    """Factory: discretization of a disc inside the box for the given field specs."""
    def make(specs, q=1, n=8, fg_depth=0, materials=None):
        materials = materials or two_materials
        lsf = circle_lsf(n)
        phases = circle_phases(materials)
        return build_discretization((n, n), BOX_ORIGIN, lsf.spacing, [lsf], phases, specs, q, fg_depth=fg_depth)
    return make
