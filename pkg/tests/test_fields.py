import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smectic.fields import (FaceVectorField, GridMismatchError, NonFiniteFieldError, ScalarField, inner,
                            inner_face, integrate, new_grid, norm, read_snapshot, write_snapshot)

from conftest import random_face, random_scalar


def test_grid_spacing():
    assert new_grid(4, 4, (0, 2, 0, 2)).hx == 0.5
    g = new_grid(128, 128, (0, 2, 0, 2))
    assert g.hx == g.hy == 0.015625


def test_grid_too_small():
    with pytest.raises(ValueError):
        new_grid(2, 4, (0, 1, 0, 1))


def test_staggered_shapes(grid8):
    assert grid8.centers()[0].shape == (8, 8)
    assert grid8.xfaces()[0].shape == (9, 8)
    assert grid8.yfaces()[0].shape == (8, 9)
    assert grid8.nodes()[0].shape == (9, 9)


def test_inner_constant_area(grid8):
    one = ScalarField.constant(grid8, 1.0)
    assert inner(one, one) == pytest.approx(4.0, rel=1e-15)
    assert inner(one, ScalarField.zeros(grid8)) == 0.0


def test_inner_matches_direct_sum(grid8, rng):
    a, b = random_scalar(grid8, rng), random_scalar(grid8, rng)
    ref = sum(a.values[i, j] * b.values[i, j] for i in range(8) for j in range(8)) * grid8.hx * grid8.hy
    assert inner(a, b) == pytest.approx(ref, rel=1e-13)


def test_inner_face_interior_ones(grid8):
    ux = np.ones((9, 8))
    uy = np.ones((8, 9))
    u = FaceVectorField(grid8, ux, uy).with_zero_normal_trace()
    n_interior = 7 * 8 + 8 * 7
    assert inner_face(u, u) == pytest.approx(n_interior * grid8.cell_area, rel=1e-14)


def test_inner_face_half_weights_walls(grid8):
    ux = np.zeros((9, 8))
    ux[0, :] = 1.0
    u = FaceVectorField(grid8, ux, np.zeros((8, 9)))
    assert inner_face(u, u) == pytest.approx(8 * 0.5 * grid8.cell_area)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nx=st.integers(4, 10), ny=st.integers(4, 10))
def test_inner_products_symmetric_and_positive(seed, nx, ny):
    rng = np.random.default_rng(seed)
    g = new_grid(nx, ny, (0.0, 1.0, -0.5, 0.5))
    a, b = random_scalar(g, rng), random_scalar(g, rng)
    u, v = random_face(g, rng, trace=True), random_face(g, rng, trace=True)
    assert inner(a, b) == pytest.approx(inner(b, a), rel=1e-14)
    assert inner_face(u, v) == pytest.approx(inner_face(v, u), rel=1e-14)
    assert norm(a) > 0 and norm(u) > 0


def test_integrate_constant():
    g = new_grid(8, 8, (0, 2, 0, 2))
    assert integrate(ScalarField.constant(g, 2.0)) == pytest.approx(8.0)
    assert integrate(ScalarField.zeros(g)) == 0.0


def test_integrate_odd_layer_function():
    g = new_grid(256, 256, (-1, 1, -1, 1))
    phi = ScalarField.from_function(g, lambda x, y: np.sin(x) * np.cos(y) ** 2)
    assert abs(integrate(phi)) < 1e-6


def test_non_finite_rejected(grid8):
    bad = np.zeros((8, 8))
    bad[3, 3] = np.nan
    with pytest.raises(NonFiniteFieldError):
        ScalarField(grid8, bad)


def test_grid_mismatch(grid8):
    other = new_grid(8, 8, (0, 1, 0, 1))
    with pytest.raises(GridMismatchError):
        inner(ScalarField.zeros(grid8), ScalarField.zeros(other))
    with pytest.raises(GridMismatchError):
        ScalarField.zeros(grid8) + ScalarField.zeros(other)


def test_snapshot_round_trip(tmp_path, grid8, rng):
    u = random_face(grid8, rng)
    path = tmp_path / "ux.txt"
    write_snapshot(path, "ux", grid8, 0.125, "xface", u.ux)
    name, g, t, loc, vals = read_snapshot(path)
    assert (name, t, loc) == ("ux", 0.125, "xface")
    assert g == grid8
    assert np.array_equal(vals, u.ux)


def test_snapshot_bad_location(tmp_path, grid8):
    with pytest.raises(ValueError):
        write_snapshot(tmp_path / "x", "x", grid8, 0.0, "node", np.zeros((9, 9)))
