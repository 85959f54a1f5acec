import numpy as np
import pytest

from xbarsim import network as nn


@pytest.fixture(scope="session")
def canonical_spec():
    return nn.canonical_network()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def canonical_params(canonical_spec):
    return nn.random_params(canonical_spec, np.random.default_rng(99), scale=0.25)
