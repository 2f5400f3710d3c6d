"""Shared fixtures: the benchmark mesh, observation window and truth model."""

import pytest

from pdeident import estimator, fem, gains
from pdeident.observation import ObservationWindow


@pytest.fixture(scope="session")
def mesh():
    return fem.Mesh1D(31)


@pytest.fixture(scope="session")
def window(mesh):
    return ObservationWindow(mesh, 0.3, 0.87)


@pytest.fixture(scope="session")
def full_window(mesh):
    return ObservationWindow(mesh, 0.0, 1.0)


@pytest.fixture(scope="session")
def truth(mesh):
    return estimator.truth_analytic(mesh)


@pytest.fixture(scope="session")
def constants(truth):
    u0_X = fem.norm(truth.u_star(0.0), "X")
    return gains.estimate_constants(truth.q_star, u0_X)
