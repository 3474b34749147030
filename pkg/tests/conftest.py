import numpy as np
import pytest

from pinnselect.reference import BurgersProblem, solve_reference


@pytest.fixture(scope="session")
def problem():
    return BurgersProblem()


@pytest.fixture(scope="session")
def ref_ladder(problem):
    """Reference solutions at increasing resolution, shared across tests."""
    return {nx: solve_reference(problem, nx=nx) for nx in (512, 1024, 2048, 4096)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
