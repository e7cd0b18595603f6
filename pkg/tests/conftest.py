import numpy as np
import pytest

from slag.torus import WeightMatrix
from slag.varieties import AmbientSpace, HomogeneousPoly, normalize, quadric_poly

A1 = (-1 + np.sqrt(3) * 1j) / 2
QUADRIC_WEIGHTS = WeightMatrix([[1, -1, 0, 0, 0, 0], [0, 0, 1, -1, 0, 0], [0, 0, 0, 0, 1, -1]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quadric():
    return AmbientSpace.quadric()


@pytest.fixture
def b1():
    return normalize(np.array([1, 1, 1, A1, 1, -1 - A1]))


def random_quadric_point(rng) -> np.ndarray:
    """Solve z1 z2 + z3 z4 + z5 z6 = 0 for z2 with the rest random."""
    z = rng.normal(size=6) + 1j * rng.normal(size=6)
    z[1] = -(z[2] * z[3] + z[4] * z[5]) / z[0]
    return normalize(z).coords


def p_poly() -> HomogeneousPoly:
    """(z1 z2)^2 + (z3 z4)^2 - (z5 z6)^2."""
    return HomogeneousPoly([(1, [2, 2, 0, 0, 0, 0]), (1, [0, 0, 2, 2, 0, 0]),
                            (-1, [0, 0, 0, 0, 2, 2])])


__all__ = ["A1", "QUADRIC_WEIGHTS", "random_quadric_point", "p_poly", "quadric_poly"]


# Lines recorded by the acceptance suite, printed after the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
