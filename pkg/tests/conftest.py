import math

import pytest

from lgaxis import REFERENCE_GRID, noiseless_scan, reference_scenario, shift_hologram_b

AUX_SHIFT = (0.0, 200.0)


@pytest.fixture(scope="session")
def ref_config():
    return reference_scenario()


@pytest.fixture(scope="session")
def ref_noiseless(ref_config):
    return noiseless_scan(ref_config, REFERENCE_GRID)


@pytest.fixture(scope="session")
def ref_aux_noiseless(ref_config):
    return noiseless_scan(shift_hologram_b(ref_config, AUX_SHIFT), REFERENCE_GRID)


def angle_close(a, b, tol):
    return abs(math.remainder(a - b, 2 * math.pi)) <= tol
