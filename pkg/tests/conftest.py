import pytest

from cavitylattice.lattice import wannier_states


@pytest.fixture(scope="session")
def wannier32():
    return wannier_states(-10.0, 32)


@pytest.fixture(scope="session")
def wannier16():
    return wannier_states(-10.0, 16)
