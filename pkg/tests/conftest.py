import numpy as np
import pytest

from sagwave.simulator import Scenario, run_replication, sample_replication


@pytest.fixture(scope="session")
def ring_run():
    """Default ring, replication 0 of master seed 42."""
    scenario = Scenario()
    concrete = sample_replication(scenario, 42, 0)
    return scenario, run_replication(concrete, 42)


@pytest.fixture
def rng():
    return np.random.default_rng(20231019)
