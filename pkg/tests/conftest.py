import numpy as np
import pytest

from wipslab.model import builtin_model


@pytest.fixture
def gauss():
    return builtin_model("mean-field-gaussian")


@pytest.fixture
def bounded():
    return builtin_model("mean-field-bounded")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
