import numpy as np
import pytest

from kakinuma.grid import PeriodicGrid, ScalarField
from kakinuma.params import validate_params


@pytest.fixture
def grid32():
    return PeriodicGrid(32)


@pytest.fixture
def grid64():
    return PeriodicGrid(64)


@pytest.fixture
def params_sym():
    # equal layers: rho = (1/2, 1/2), h = (1, 1)
    return validate_params(0.5, 1.0, 0.1)


@pytest.fixture
def params_asym():
    # h2 = 0.7 / (1 - 0.5) = 1.4
    return validate_params(0.3, 0.6, 0.05)


def smooth_field(grid, rng, modes=3, amplitude=1.0):
    """Random band-limited field, decaying mode amplitudes."""
    sin = {k: amplitude * rng.normal() / k**2 for k in range(1, modes + 1)}
    cos = {k: amplitude * rng.normal() / k**2 for k in range(1, modes + 1)}
    return ScalarField.from_modes(grid, sin=sin, cos=cos)
