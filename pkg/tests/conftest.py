import numpy as np
import pytest

from geopspline.grid import GeodesicGrid


@pytest.fixture(scope="session")
def grids():
    cache = {}

    def get(nu):
        if nu not in cache:
            cache[nu] = GeodesicGrid(nu)
        return cache[nu]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_unit_vectors(rng, n):
    p = rng.standard_normal((n, 3))
    return p / np.linalg.norm(p, axis=1)[:, None]


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
