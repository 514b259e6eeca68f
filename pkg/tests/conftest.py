"""Shared fixtures."""

import numpy as np
import pytest

from activemap.worldsim import world_from_cells
from oracles import room


@pytest.fixture
def small_room():
    return room(12, 10)


@pytest.fixture(scope="session")
def open_field():
    obs = np.zeros((64, 64), dtype=bool)
    obs[0, :] = obs[-1, :] = obs[:, 0] = obs[:, -1] = True
    return world_from_cells(obs)
