import os

import numpy as np
import pytest

from src.config_loader import Settings
from src.hermitian import TolerancePolicy
from src.problems import prob_0, prob_a, prob_b, prob_c

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PROBLEMS_DIR = os.path.join(ROOT_DIR, 'problems')
CONFIG_PATH = os.path.join(ROOT_DIR, 'config.yaml')

C_A = (2.5 * np.pi) ** 2


def assert_allclose(actual, desired, atol=1e-12):
    np.testing.assert_allclose(actual, desired, rtol=0., atol=atol)


@pytest.fixture
def tol():
    return TolerancePolicy()


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture
def p0():
    return prob_0()


@pytest.fixture
def pa():
    return prob_a()


@pytest.fixture
def pb():
    return prob_b()


@pytest.fixture
def pc():
    return prob_c()


@pytest.fixture
def problem_path():
    def _path(name):
        return os.path.join(PROBLEMS_DIR, name)
    return _path
