import numpy as np
import pytest

from wavewhittle.kernels import default_table
from wavewhittle.wavelets import build_daubechies_filters


@pytest.fixture(scope="session")
def table():
    return default_table(4)


@pytest.fixture(scope="session")
def db4():
    return build_daubechies_filters(4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
