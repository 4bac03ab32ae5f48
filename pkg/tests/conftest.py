import json
import math

import numpy as np
import pytest

from services.grid import Domain, Grid, mode_field
from services.operators import PhysicalParams
from services.state import StateVector
from utils.cache_functions import cached_laplacian


@pytest.fixture
def unit_params():
    return PhysicalParams(c=1.0, b=1.0, k=1.0)


@pytest.fixture
def interval_grid():
    return Grid(Domain.interval(math.pi), (31,))


@pytest.fixture
def interval_lap(interval_grid):
    return cached_laplacian(interval_grid)


@pytest.fixture
def rectangle_grid():
    return Grid(Domain.rectangle(math.pi, math.pi), (7, 9))


@pytest.fixture
def first_mode(interval_grid):
    return mode_field(interval_grid, 1)


@pytest.fixture
def mode_state(first_mode):
    """(sin x, 0) on the interval grid"""
    return StateVector(first_mode, 0.0 * first_mode)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def write_config(tmp_path):
    """Write a partial run config to a temp file and return its path as str"""

    def _write(data, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def small_run():
    """Partial config for quick end-to-end runs"""
    return {
        "grid": {"n_per_axis": [15]},
        "scheme": {"dt": 0.02, "t_end": 30.0, "record_every": 1},
        "spectrum": {"n_modes": 5},
    }
