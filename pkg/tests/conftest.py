import math

import numpy as np
import pytest

from mpp.development import CovarianceSpec
from mpp.geometry import Euclidean, Hyperbolic, Sphere, Torus


def rotated_frame(m, base, angle):
    """Tangent basis at ``base`` rotated by ``angle`` in its own plane."""
    B = m.tangent_basis(base)
    c, s = math.cos(angle), math.sin(angle)
    return B @ np.array([[c, -s], [s, c]])


def aniso_cov(m, lambdas=(2.0, 1.0), angle=0.0, base=None):
    base = m.default_point() if base is None else base
    return CovarianceSpec.create(m, base, rotated_frame(m, base, angle), lambdas)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


SURFACES = {
    "sphere": Sphere(1.0),
    "hyperbolic": Hyperbolic(1.0),
    "torus": Torus(2.0, 1.0),
    "euclidean": Euclidean(2),
}


@pytest.fixture(params=list(SURFACES))
def surface(request):
    return SURFACES[request.param]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
