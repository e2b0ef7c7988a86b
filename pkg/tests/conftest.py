import numpy as np
import pytest

from smectic import FaceVectorField, ScalarField, new_grid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_scalar(grid, rng):
    return ScalarField(grid, rng.standard_normal((grid.nx, grid.ny)))


def random_face(grid, rng, trace=False):
    u = FaceVectorField(grid, rng.standard_normal((grid.nx + 1, grid.ny)),
                        rng.standard_normal((grid.nx, grid.ny + 1)))
    return u if trace else u.with_zero_normal_trace()


@pytest.fixture
def grid8():
    return new_grid(8, 8, (0.0, 2.0, 0.0, 2.0))
