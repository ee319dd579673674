import math

import pytest

from linentropy.linear_process import ExplicitCoefficients, LinearProcessSpec, NormalLaw

# a = [1, 0.5, 0.25] with N(0, 1) innovations: total variance 1.3125
GAUSS_VAR = 1.3125
GAUSS_Q = 1.0 / (2.0 * math.sqrt(GAUSS_VAR * math.pi))


@pytest.fixture
def gauss_spec():
    return LinearProcessSpec(ExplicitCoefficients((1.0, 0.5, 0.25)), NormalLaw(1.0))


@pytest.fixture
def iid_spec():
    return LinearProcessSpec(ExplicitCoefficients((1.0,)), NormalLaw(1.0))
