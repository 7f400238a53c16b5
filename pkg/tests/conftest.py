"""
Shared fixtures and the ``--runslow`` switch for the acceptance runs.
"""

import pytest

from rkcq_scatter import BoundarySpace, UNIT_SQUARE_VERTICES, mesh_polygon


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def square_space():
    """Unit square, 16 uniform panels, quadratic traces (48 dofs)."""
    return BoundarySpace(mesh_polygon(UNIT_SQUARE_VERTICES, 0.25), 2)


@pytest.fixture(scope="session")
def coarse_square_space():
    """Unit square, 8 uniform panels, linear traces (16 dofs)."""
    return BoundarySpace(mesh_polygon(UNIT_SQUARE_VERTICES, 0.5), 1)
