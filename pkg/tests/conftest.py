import pytest
from hypothesis import HealthCheck, settings

from ddchoice import ModelParams, SolverGrids, solve_backward

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def grids():
    return SolverGrids()


@pytest.fixture(scope="session")
def policy(params, grids):
    # one full backward solve shared by the whole suite (~4s)
    return solve_backward(params, grids)
