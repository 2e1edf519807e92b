import numpy as np
import pytest

from smoothfix.weights import WeightModel


@pytest.fixture
def kac1():
    return WeightModel("kac", params={"beta": 1.0})


@pytest.fixture
def kac2():
    return WeightModel("inelastic-kac", params={"beta": 2.0})


@pytest.fixture
def half_split():
    return WeightModel("deterministic-split", params={"T": [0.5, 0.5]})


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
