"""Shared fixtures; ground states and limit systems live for the whole session."""
import pytest

from kpeaks.fields3d import potential_preset
from kpeaks.kirchhoff_limit import ProblemParams, build_limit_system
from kpeaks.radial_core import solve_ground_state


@pytest.fixture(scope="session")
def ground_state():
    """The lambda = 1, p = 3 ground state."""
    return solve_ground_state(1.0, 3.0, 1e-8)


@pytest.fixture(scope="session")
def params():
    return ProblemParams(1.0, 0.01, 3.0)


@pytest.fixture(scope="session")
def two_well_model():
    return potential_preset("two_well_quadratic")


@pytest.fixture(scope="session")
def single_well_model():
    return potential_preset("single_well_quadratic")


@pytest.fixture(scope="session")
def constant_model():
    return potential_preset("constant", {"values": [1.0]})


@pytest.fixture(scope="session")
def two_well_limit(params, two_well_model):
    return build_limit_system(params, two_well_model.wells)


@pytest.fixture(scope="session")
def single_well_limit(params, single_well_model):
    return build_limit_system(params, single_well_model.wells)


@pytest.fixture(scope="session")
def constant_limit(params, constant_model):
    return build_limit_system(params, constant_model.wells)
