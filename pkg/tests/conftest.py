import numpy as np
import pytest

from mourrelab.lattice import make_grid

CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[CRITERIA] = []


def pytest_terminal_summary(terminalreporter, config):
    # criterion lines survive output capture this way
    lines = config.stash.get(CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def criteria_log(request):
    return request.config.stash[CRITERIA]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    return make_grid(n=32, half_width=8.0)


def random_state(rng, grid):
    return rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)


def plane_wave(grid, index):
    """e^{ikx} at the momentum node k = index * pi / L."""
    k = index * np.pi / grid.half_width
    return np.exp(1j * k * grid.x(0))
