import numpy as np
import pytest


@pytest.fixture()
def rng():
    return np.random.default_rng(777)


def pytest_addoption(parser):
    parser.addoption("--bonn-dir", default=None,
                     help="directory holding the Bonn sets (A-E or Z/O/N/F/S)")
