import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from smectic import operators as ops
from smectic.fields import FaceVectorField, ScalarField, TensorSample, inner, inner_face, inner_tensor, integrate, new_grid

from conftest import random_face, random_scalar

grids = st.builds(lambda nx, ny, seed: (new_grid(nx, ny, (0.0, 1.0, 0.0, 0.75)), np.random.default_rng(seed)),
                  st.integers(4, 12), st.integers(4, 12), st.integers(0, 2**32 - 1))


def _flat(f):
    return f.values.ravel()


def _scalar_matrix(g, op):
    return ops.assemble_dense(lambda x: _flat(op(ScalarField(g, x.reshape(g.nx, g.ny)))), g.nx * g.ny)


def test_grad_constant_and_linear():
    g = new_grid(8, 8, (0, 2, 0, 2))
    assert not np.any(ops.grad(ScalarField.constant(g, 3.0)).ux)
    gx = ops.grad(ScalarField.from_function(g, lambda x, y: x))
    assert np.allclose(gx.ux[1:-1], 1.0, rtol=0, atol=1e-14)
    assert not np.any(gx.ux[[0, -1]])
    assert np.allclose(gx.uy, 0.0)


def test_grad_second_order():
    errs = []
    for n in (32, 64):
        g = new_grid(n, n, (0, 2, 0, 2))
        gx = ops.grad(ScalarField.from_function(g, lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y)))
        xa, ya = g.xfaces()
        exact = -np.pi * np.sin(np.pi * xa) * np.cos(np.pi * ya)
        errs.append(np.abs(gx.ux[1:-1] - exact[1:-1]).max())
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


def test_laplacian_and_biharmonic_analytic():
    errs_l, errs_b = [], []
    for n in (32, 64):
        g = new_grid(n, n, (0, 2, 0, 2))
        f = ScalarField.from_function(g, lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y))
        errs_l.append(np.abs(ops.laplacian(f).values + 2 * np.pi**2 * f.values).max())
        errs_b.append(np.abs(ops.biharmonic(f).values - 4 * np.pi**4 * f.values).max())
    assert np.log2(errs_l[0] / errs_l[1]) == pytest.approx(2.0, abs=0.1)
    assert np.log2(errs_b[0] / errs_b[1]) == pytest.approx(2.0, abs=0.1)


def test_laplacian_dense_kronecker_oracle():
    g = new_grid(6, 5, (0, 1.5, 0, 1))

    def d2(n, h):
        main = -2.0 * np.ones(n)
        main[[0, -1]] = -1.0
        return sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1]).toarray() / h**2

    ref = np.kron(d2(6, g.hx), np.eye(5)) + np.kron(np.eye(6), d2(5, g.hy))
    assert np.allclose(_scalar_matrix(g, ops.laplacian), ref, rtol=1e-14, atol=1e-10)


def test_div_of_gradient_integrates_to_zero(grid8, rng):
    assert abs(integrate(ops.div(ops.grad(random_scalar(grid8, rng))))) < 1e-12


@settings(max_examples=30, deadline=None)
@given(grids)
def test_grad_div_adjoint(gr):
    g, rng = gr
    q, u = random_scalar(g, rng), random_face(g, rng)
    lhs = inner(ops.div(u), q)
    rhs = -inner_face(u, ops.grad(q))
    assert abs(lhs - rhs) <= 1e-13 * (abs(lhs) + np.linalg.norm(q.values) * np.linalg.norm(u.ux))


@settings(max_examples=30, deadline=None)
@given(grids)
def test_laplacian_biharmonic_self_adjoint(gr):
    g, rng = gr
    a, b = random_scalar(g, rng), random_scalar(g, rng)
    La, Lb = ops.laplacian(a), ops.laplacian(b)
    assert inner(La, b) == pytest.approx(inner(a, Lb), rel=1e-12)
    assert inner(ops.biharmonic(a), b) == pytest.approx(inner(La, Lb), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(grids)
def test_advect_weighted_grad_adjoint(gr):
    g, rng = gr
    a, f, u = random_scalar(g, rng), random_scalar(g, rng), random_face(g, rng)
    lhs = inner(ops.advect_scalar(u, a), f)
    rhs = -inner_face(u, ops.weighted_grad(a, f))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(grids)
def test_convect_skew(gr):
    g, rng = gr
    w, v = random_face(g, rng), random_face(g, rng)
    c = ops.convect(w, v)
    assert abs(inner_face(c, v)) <= 1e-13 * np.sqrt(inner_face(c, c) * inner_face(v, v))


@settings(max_examples=30, deadline=None)
@given(grids)
def test_deformation_tensor_div_adjoint(gr):
    g, rng = gr
    u, w = random_face(g, rng), random_face(g, rng)
    s = ops.deformation(w)
    lhs = inner_tensor(ops.deformation(u), s)
    rhs = -inner_face(u, ops.tensor_div(s))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(grids, st.floats(0, 2 * np.pi))
def test_magnetic_pair_adjoint(gr, angle):
    g, rng = gr
    h = (np.cos(angle), np.sin(angle))
    phi, s = random_scalar(g, rng), random_scalar(g, rng)
    lhs = inner(ops.magnetic_div(s, h), phi)
    rhs = -inner(s, ops.grad_dot_h(ops.grad(phi), h))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_advect_scalar_dense_oracle(grid8, rng):
    a = random_scalar(grid8, rng)
    u = random_face(grid8, rng)
    g = grid8
    # direct flux construction, independent of the centre-to-face helper
    fx = np.zeros((9, 8))
    fx[1:-1] = u.ux[1:-1] * 0.5 * (a.values[1:] + a.values[:-1])
    fy = np.zeros((8, 9))
    fy[:, 1:-1] = u.uy[:, 1:-1] * 0.5 * (a.values[:, 1:] + a.values[:, :-1])
    ref = (fx[1:] - fx[:-1]) / g.hx + (fy[:, 1:] - fy[:, :-1]) / g.hy
    assert np.allclose(ops.advect_scalar(u, a).values, ref, rtol=1e-13, atol=1e-12)


def test_advect_constant_divergence_free(grid8, rng):
    q = random_scalar(grid8, rng)
    # a discretely divergence-free field: curl of a nodal stream function
    s = rng.standard_normal((9, 9))
    s[0, :] = s[-1, :] = s[:, 0] = s[:, -1] = 0.0
    u = FaceVectorField(grid8, (s[:, 1:] - s[:, :-1]) / grid8.hy, -(s[1:, :] - s[:-1, :]) / grid8.hx)
    assert np.abs(ops.div(u).values).max() < 1e-12
    assert np.abs(ops.advect_scalar(u, ScalarField.constant(grid8, 2.5)).values).max() < 1e-11
    del q


def test_convect_zero_and_linear(grid8, rng):
    w, v = random_face(grid8, rng), random_face(grid8, rng)
    assert not np.any(ops.convect(FaceVectorField.zeros(grid8), v).ux)
    lin = ops.convect(w, 2.0 * v)
    ref = ops.convect(w, v)
    assert np.allclose(lin.ux, 2.0 * ref.ux) and np.allclose(lin.uy, 2.0 * ref.uy)


def test_deformation_pure_shear():
    g = new_grid(16, 8, (-1, 1, -0.5, 0.5))
    xa, ya = g.xfaces()
    u = FaceVectorField(g, 0.4 * ya, np.zeros((16, 9)))
    D = ops.deformation(u, ops.BcSpec(top=0.2, bottom=-0.2))
    assert np.allclose(D.dxy[1:-1, :], 0.2, atol=1e-13)
    assert np.allclose(D.dxx, 0.0) and np.allclose(D.dyy, 0.0)


def test_deformation_rigid_translation():
    g = new_grid(8, 8, (0, 1, 0, 1))
    u = FaceVectorField(g, np.ones((9, 8)), np.zeros((8, 9)))
    D = ops.deformation(u, ops.BcSpec(top=1.0, bottom=1.0))
    assert np.allclose(D.dxx, 0) and np.allclose(D.dyy, 0) and np.allclose(D.dxy[1:-1], 0)


def test_stress_newtonian_reduction(grid8, rng):
    D = ops.deformation(random_face(grid8, rng))
    gphi = ops.grad(random_scalar(grid8, rng))
    s = ops.stress(D, gphi, 0.0, 0.02, 0.0)
    assert np.allclose(s.dxx, 0.02 * D.dxx) and np.allclose(s.dxy, 0.02 * D.dxy)
    z = ops.stress(TensorSample.zeros(grid8), gphi, 1.0, 0.02, 1.0)
    assert not np.any(z.dxx) and not np.any(z.dxy)


def test_stress_mu1_hand_value():
    g = new_grid(8, 8, (0, 1, 0, 1))
    gphi = ops.grad(ScalarField.from_function(g, lambda x, y: x))
    D = TensorSample(g, np.full((8, 8), 0.3), np.zeros((8, 8)), np.zeros((9, 9)))
    s = ops.stress(D, gphi, 1.0, 0.0, 0.0)
    # interior cells see g = (1, 0), so (g.Dg) g(x)g = 0.3 e_x(x)e_x
    assert np.allclose(s.dxx[1:-1, 1:-1], 0.3)
    assert np.allclose(s.dyy, 0.0)


def test_stress_rejects_negative():
    g = new_grid(4, 4, (0, 1, 0, 1))
    with pytest.raises(ValueError):
        ops.stress(TensorSample.zeros(g), FaceVectorField.zeros(g), -1.0, 0.0, 0.0)


def test_tensor_div_constant_is_zero_in_interior():
    g = new_grid(8, 8, (0, 1, 0, 1))
    s = TensorSample(g, np.full((8, 8), 2.0), np.full((8, 8), -1.0), np.full((9, 9), 0.7))
    t = ops.tensor_div(s)
    assert np.allclose(t.ux[2:-2, 1:-1], 0.0, atol=1e-12)
    assert np.allclose(t.uy[1:-1, 2:-2], 0.0, atol=1e-12)


def test_magnetic_terms():
    g = new_grid(16, 16, (0, 1, 0, 1))
    fy = ScalarField.from_function(g, lambda x, y: np.sin(3 * y))
    assert not np.any(ops.grad_dot_h(ops.grad(fy), (1.0, 0.0)).values)
    q = ScalarField.from_function(g, lambda x, y: 0.5 * x**2)
    m = ops.magnetic_div(ops.grad_dot_h(ops.grad(q), (1.0, 0.0)), (1.0, 0.0))
    assert np.allclose(m.values[2:-2, :], 1.0, atol=1e-10)
