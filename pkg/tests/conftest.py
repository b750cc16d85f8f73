import numpy as np
import pytest

from enrichcontact.assembly import Material
from enrichcontact.mesh import generate_rect_grid, merge_meshes
from enrichcontact.solver import Problem


def two_block_problem(nx_bottom=3, nx_top=2, E=(10.0, 10.0), nu=0.3):
    """Two stacked unit-height blocks with a non-conforming shared edge at x2 = 1."""
    bottom = generate_rect_grid((0.0, 0.0), 3.0, 1.0, nx_bottom, 1)
    top = generate_rect_grid((0.0, 1.0), 3.0, 1.0, nx_top, 1)
    mesh = merge_meshes({"b": bottom, "t": top})
    mats = {0: Material(E[0], nu), 1: Material(E[1], nu)}
    return Problem(mesh, mats, interface=("b.top", "t.bottom"))


def affine_field(x, A, c):
    return x @ np.asarray(A).T + np.asarray(c)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = []


def report(line):
    """Record one acceptance line; all lines are repeated in the terminal summary."""
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
