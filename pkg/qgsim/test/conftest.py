"""Shared fixtures: bases, profiles and meshes are expensive, build them once."""

import numpy as np
import pytest

from services.extension import ZGrid, build_extension_basis
from services.profile_ode import get_profile
from services.spectral_basis import DomainSpec, build_basis


@pytest.fixture(scope="session")
def torus_basis():
    return build_basis(DomainSpec(kind="torus", n=16))


@pytest.fixture(scope="session")
def rect_basis():
    return build_basis(DomainSpec(kind="rectangle", lengths=(np.pi, np.pi), n=12))


@pytest.fixture(scope="session")
def profile_half():
    return get_profile(0.5)


@pytest.fixture(scope="session")
def profile_zero():
    return get_profile(0.0)


@pytest.fixture(scope="session")
def zgrid_half(torus_basis, profile_half):
    return ZGrid.for_basis(0.5, torus_basis, profile_half, M=256)


@pytest.fixture(scope="session")
def ext_half(zgrid_half, torus_basis, profile_half):
    return build_extension_basis(zgrid_half, torus_basis, profile_half)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
