"""Shared fixtures: small meshes and problems reused across test modules."""

import numpy as np
import pytest

from rom_apod import build_mesh, kolmogorov_problem


@pytest.fixture(scope="session")
def mesh2():
    return build_mesh(2, 2.0 * np.pi)


@pytest.fixture(scope="session")
def mesh4():
    return build_mesh(4, 2.0 * np.pi)


@pytest.fixture(scope="session")
def mesh8():
    return build_mesh(8, 2.0 * np.pi)


@pytest.fixture(scope="session")
def kolmo():
    return kolmogorov_problem(0.1)
