import numpy as np
import pytest

from glcarleman.grid import DomainSpec, build_grid


@pytest.fixture(scope="session")
def square_spec():
    return DomainSpec(shape="unit_square", omega_center=(0.5, 0.5),
                      omega_radius=0.25)


@pytest.fixture(scope="session")
def disk_spec():
    return DomainSpec(shape="unit_disk", omega_center=(0.0, 0.0),
                      omega_radius=0.35)


@pytest.fixture(scope="session")
def grid32(square_spec):
    return build_grid(square_spec, 32, 32, 32, 1.0)


@pytest.fixture(scope="session")
def grid64(square_spec):
    return build_grid(square_spec, 64, 64, 64, 1.0)


@pytest.fixture(scope="session")
def disk_grid(disk_spec):
    return build_grid(disk_spec, 64, 64, 32, 1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
