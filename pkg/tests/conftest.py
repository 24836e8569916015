import numpy as np
import pytest

from inflowcast.synth import ScenarioConfig, generate_scenario


@pytest.fixture(scope="session")
def scenario5():
    """Shared 5-year scenario for integration-style tests."""
    return generate_scenario(ScenarioConfig(n_years=5, seed=101))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240915)
