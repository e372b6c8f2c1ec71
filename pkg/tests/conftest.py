import numpy as np
import pytest

from roleengine import worlds
from roleengine.grids import OccupancyGrid


@pytest.fixture(scope="session")
def bundle_dir(tmp_path_factory):
    """Bundled maps/scenarios/suites written once per test session."""
    out = tmp_path_factory.mktemp("scenarios")
    worlds.write_bundle(out)
    return out


@pytest.fixture
def empty_grid():
    return OccupancyGrid(np.zeros((40, 40), dtype=bool), 0.1)


def make_grid(rows, resolution=1.0):
    """Grid from a list of strings, '#' = occupied."""
    cells = np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
    return OccupancyGrid(cells, resolution)
