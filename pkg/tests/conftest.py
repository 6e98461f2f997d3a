import numpy as np
import pytest

from dne.meshing import boundary_distance_field, interval_mesh, rectangle_mesh
from dne.operators import (ExponentField, LerayLionsOperator, PotentialField,
                           SourceTerm)


@pytest.fixture(scope="session")
def mesh_1d():
    return interval_mesh(0.0, 1.0, 100)


@pytest.fixture(scope="session")
def mesh_2d():
    return rectangle_mesh(0.0, 1.0, 0.0, 1.0, 12, 12)


def make_problem_data(mesh, p=2.5, q=1.25, beta=0.0, gamma=1.0):
    """Constant-exponent isotropic operator with the prototype source and a
    bump potential on the given mesh."""
    ne = mesh.n_elements
    exponent = ExponentField.constant(ne, p)
    op = LerayLionsOperator.isotropic(exponent, 1.0, ndim=mesh.dimension)
    delta = boundary_distance_field(mesh).quadrature
    source = SourceTerm(np.full(ne, 1.0), delta, gamma=gamma, beta=beta, q=q)
    xb = mesh.barycenters
    prof = np.ones(ne)
    for axis in range(mesh.dimension):
        lo = mesh.bounds[2 * axis]
        hi = mesh.bounds[2 * axis + 1]
        prof = prof * 4.0 * (xb[:, axis] - lo) * (hi - xb[:, axis]) / (hi - lo) ** 2
    potential = PotentialField.constant(prof)
    return op, source, potential


@pytest.fixture(scope="session")
def data_1d(mesh_1d):
    return make_problem_data(mesh_1d)


@pytest.fixture(scope="session")
def data_2d(mesh_2d):
    return make_problem_data(mesh_2d, p=2.4, q=1.3)
