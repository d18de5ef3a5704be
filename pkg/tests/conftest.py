import numpy as np
import pytest

from oblique_fem.geometry import BoundaryCurve
from oblique_fem.mesh import CurvedMesh, coarse_mesh, refine

# acceptance lines collected by tests/test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _levels(curve, nb, last):
    out = [coarse_mesh(curve, nb)]
    for _ in range(last):
        out.append(refine(out[-1]))
    return out


@pytest.fixture(scope="session")
def disk_meshes():
    return _levels(BoundaryCurve.unit_circle(), 6, 3)


@pytest.fixture(scope="session")
def ellipse_meshes():
    return _levels(BoundaryCurve.ellipse(2.0, 1.0), 8, 3)


def straight_mesh(vertices, triangles):
    """Mesh of straight triangles only; the curve is a placeholder."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    return CurvedMesh(BoundaryCurve.unit_circle(), vertices, np.full(len(vertices), np.nan), triangles,
                      np.zeros(len(triangles), dtype=bool), np.full((len(triangles), 2), np.nan))


@pytest.fixture
def square_patch():
    """Four straight triangles around the centre of [0, 1]^2."""
    return straight_mesh([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)],
                         [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)])
