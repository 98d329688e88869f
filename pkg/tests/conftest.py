import numpy as np
import pytest

from lavatar.bodymodel import generate_test_body


@pytest.fixture(scope="session")
def body0():
    return generate_test_body(seed=7, detail=0)


@pytest.fixture(scope="session")
def body1():
    return generate_test_body(seed=7, detail=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
