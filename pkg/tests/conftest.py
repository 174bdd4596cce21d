from dataclasses import replace

import numpy as np
import pytest

from biofilm_fv.params import default_physical_params, scale_parameters


@pytest.fixture
def scaled():
    return scale_parameters(default_physical_params())


@pytest.fixture
def zero_rates(scaled):
    return replace(scaled, Rc0=0.0, Rp0=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
