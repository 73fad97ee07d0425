import pytest

from homflow.geometry import Box, GraphSpec, certify_geometry, generate
from homflow.uniform_flow import build

# one window serves every cell and convergence experiment down to eps = 1/32 on the unit cube
WINDOW = Box((-8, -8), (40, 40))
KINDS = [("lattice_zd", 0.0), ("jittered_lattice", 0.25), ("voronoi_points", 0.3)]

ACCEPTANCE_LINES = []


def make_operator(kind, amplitude, seed=3, variant="shortest"):
    g = generate(GraphSpec(kind, 2, amplitude, seed, 52, (-10, -10)))
    cert = certify_geometry(g, WINDOW)
    return build(g, cert, WINDOW, variant)


@pytest.fixture(scope="session")
def operators():
    return {kind: make_operator(kind, a) for kind, a in KINDS}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
