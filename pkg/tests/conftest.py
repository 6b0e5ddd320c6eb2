import numpy as np
import pytest

from twophase.bart import BartOptions
from twophase.popgen import PopulationConfig, generate_population
from twophase.sampling import ScenarioConfig, draw_two_phase_sample


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow simulation reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fast_bart():
    return BartOptions(n_trees=10, n_burn=50, n_keep=20, thin=1)


@pytest.fixture(scope="session")
def s1_population():
    return generate_population(PopulationConfig(seed=11))


@pytest.fixture(scope="session")
def s1_sample(s1_population):
    return draw_two_phase_sample(s1_population, ScenarioConfig(scenario="S1"), seed=5, replicate=0)
