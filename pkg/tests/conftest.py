import numpy as np
import pytest

from cookiewalk import CookieEnvironment, sample_regenerations
from cookiewalk.environment import env_ballistic, env_fair, env_single_07, env_sublinear


@pytest.fixture(scope="session")
def e0():
    return env_fair()


@pytest.fixture(scope="session")
def e1():
    return env_single_07()


@pytest.fixture(scope="session")
def e2():
    return env_ballistic()


@pytest.fixture(scope="session")
def e3():
    return env_sublinear()


@pytest.fixture(scope="session")
def all_ones():
    return CookieEnvironment.deterministic([1.0], strict=False)


@pytest.fixture(scope="session")
def mix_env():
    return CookieEnvironment.mixture([(0.5, [0.1]), (0.5, [0.9])])


@pytest.fixture(scope="session")
def e1_batch(e1):
    """200k cycles on the single-cookie environment, reused across tests."""
    return sample_regenerations(e1, 200_000, cap=4096, master_seed=101)


@pytest.fixture(scope="session")
def e2_batch(e2):
    """500k cycles on the ballistic environment, reused across tests."""
    return sample_regenerations(e2, 500_000, cap=100_000, master_seed=102)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=12345))
