import time
from functools import lru_cache

import numpy as np
import pytest

from lieddp.dynamics import RigidBodyParams, RigidBodySE3
from lieddp.scenario import fixture_path, load_scenario
from lieddp.solver import solve


@lru_cache(maxsize=None)
def solved_fixture(name):
    """Solve a shipped scenario once per session; returns (scenario, result, seconds)."""
    scenario = load_scenario(fixture_path(name))
    start = time.perf_counter()
    result = solve(scenario.problem(), scenario.solver)
    return scenario, result, time.perf_counter() - start


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture(scope="session")
def unit_body():
    return RigidBodySE3(RigidBodyParams(np.ones(3), 1.0))


@pytest.fixture(scope="session")
def simple30():
    return solved_fixture("se3_simple30")
