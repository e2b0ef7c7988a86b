"""Seeded property suite for the discrete operators, the solvers and the IEQ updates.

Every check returns a :class:`CheckResult` with a relative defect; a check
passes when the defect is at most ``tol``. ``corrupt="grad"`` swaps in a
gradient with a perturbed stencil for the duration of the suite, which must
make the adjointness check fail (negative control).
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import ieq
from . import operators as ops
from .fields import FaceVectorField, ScalarField, inner, inner_face, inner_tensor, new_grid, norm
from .ieq import Params
from .linsolve import (CoupledLayout, PotentialOperator, PressureSolver, SolverConfig, elastic_operator,
                       probe_sparse, solve_coupled)

CORRUPTIONS = ("grad",)


@dataclass
class CheckResult:
    name: str
    defect: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.defect) and self.defect <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<34s} defect={self.defect:.3e} tol={self.tol:.0e}"


def _scalar(g, rng):
    return ScalarField(g, rng.standard_normal((g.nx, g.ny)))


def _face(g, rng, trace=False):
    u = FaceVectorField(g, rng.standard_normal((g.nx + 1, g.ny)), rng.standard_normal((g.nx, g.ny + 1)))
    return u if trace else u.with_zero_normal_trace()


def _rel(a: float, b: float, scale: float) -> float:
    return abs(a - b) / max(scale, 1e-300)


def _adjoint_pair(name, fwd, adj, x, y, ip_out, ip_in, sign=1.0, tol=1e-12):
    """``ip_out(fwd x, y) == sign * ip_in(x, adj y)``."""
    fx, ay = fwd(x), adj(y)
    lhs, rhs = ip_out(fx, y), sign * ip_in(x, ay)
    scale = np.sqrt(ip_out(fx, fx) * ip_out(y, y)) + np.sqrt(ip_in(x, x) * ip_in(ay, ay))
    return CheckResult(name, _rel(lhs, rhs, scale), tol)


def _self_adjoint(name, A, f, g, ip, tol=1e-12):
    Af, Ag = A(f), A(g)
    scale = np.sqrt(ip(Af, Af) * ip(g, g)) + np.sqrt(ip(f, f) * ip(Ag, Ag))
    return CheckResult(name, _rel(ip(Af, g), ip(f, Ag), scale), tol)


def _neumann_second_difference(n, h):
    main = -2.0 * np.ones(n)
    main[0] = main[-1] = -1.0
    return sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1]) / h**2


@contextlib.contextmanager
def _corrupted(kind):
    if kind is None:
        yield
        return
    if kind not in CORRUPTIONS:
        raise ValueError(f"unknown corruption {kind!r}")
    orig = ops.grad

    def bad_grad(phi, bc=None):
        gx = orig(phi, bc)
        ux = gx.ux.copy()
        ux[1:-1] += 1e-3 * phi.values[1:] / phi.grid.hx  # one-sided stencil weight
        return FaceVectorField(phi.grid, ux, gx.uy, check=False)

    ops.grad = bad_grad
    try:
        yield
    finally:
        ops.grad = orig


def run_checks(seed: int = 0, nx: int = 8, ny: int = 8, corrupt: str | None = None,
               tol: float = 1e-12) -> list[CheckResult]:
    """Run every property on an ``nx x ny`` grid of ``[0,1] x [0,1.25]`` with the given seed."""
    if nx > 16 or ny > 16:
        raise ValueError("dense-oracle comparisons need nx, ny <= 16")
    rng = np.random.default_rng(seed)
    g = new_grid(nx, ny, (0.0, 1.0, 0.0, 1.25))
    prm = Params(M=1e-2, mu1=0.3, mu5=0.2, dt=0.05)
    out: list[CheckResult] = []
    with _corrupted(corrupt):
        f, h, a = _scalar(g, rng), _scalar(g, rng), _scalar(g, rng)
        v, w = _face(g, rng), _face(g, rng)
        ga = ops.grad(a)
        out.append(_adjoint_pair("grad/div adjoint", ops.grad, ops.div, f, v, inner_face, inner, -1.0, tol))
        out.append(_adjoint_pair("center_to_faces adjoint", ops.center_to_faces,
                                 lambda y: ScalarField(g, sum(ops.faces_to_centers(y))),
                                 f, _face(g, rng, trace=True), inner_face, inner, 1.0, tol))
        out.append(_adjoint_pair("grad_product adjoint", lambda x: ops.grad_product(ga, x),
                                 lambda y: ops.grad_product_adjoint(ga, y), v, f, inner, inner_face, 1.0, tol))
        out.append(_adjoint_pair("advect/weighted_grad adjoint", lambda x: ops.advect_scalar(x, a),
                                 lambda y: ops.weighted_grad(a, y), v, f, inner, inner_face, -1.0, tol))
        out.append(_adjoint_pair("deformation/tensor_div adjoint", ops.deformation,
                                 lambda s: ops.tensor_div(s), v, ops.deformation(w),
                                 inner_tensor, inner_face, -1.0, tol))
        hvec = (0.6, 0.8)
        out.append(_adjoint_pair("grad_dot_h/magnetic_div adjoint",
                                 lambda x: ops.grad_dot_h(ops.grad(x), hvec),
                                 lambda y: ops.magnetic_div(y, hvec), f, h, inner, inner, -1.0, tol))

        cv = ops.convect(w, v)
        out.append(CheckResult("convect skew-symmetry",
                               abs(inner_face(cv, v)) / max(norm(cv) * norm(v), 1e-300), tol))

        out.append(_self_adjoint("laplacian self-adjoint", ops.laplacian, f, h, inner, tol))
        out.append(_self_adjoint("biharmonic self-adjoint", ops.biharmonic, f, h, inner, tol))
        out.append(_self_adjoint("elastic operator self-adjoint",
                                 lambda x: elastic_operator(ga, x, prm.eps), f, h, inner, tol))

        # dense oracle: Kronecker Neumann Laplacian built independently of the stencils
        n = nx * ny
        L = ops.assemble_dense(lambda x: ops.laplacian(ScalarField(g, x.reshape(nx, ny))).values.ravel(), n)
        ref = (sp.kron(_neumann_second_difference(nx, g.hx), sp.eye(ny))
               + sp.kron(sp.eye(nx), _neumann_second_difference(ny, g.hy))).toarray()
        out.append(CheckResult("laplacian dense equivalence",
                               np.abs(L - ref).max() / np.abs(ref).max(), tol))
        B = ops.assemble_dense(lambda x: ops.biharmonic(ScalarField(g, x.reshape(nx, ny))).values.ravel(), n)
        out.append(CheckResult("biharmonic dense equivalence", np.abs(B - L @ L).max() / np.abs(B).max(), tol))

        # matrix-free coupled operator against its probed sparse assembly
        layout = CoupledLayout(g)
        u_star = _face(g, rng) * 0.3
        op = PotentialOperator(g, prm, 2.0 * prm.dt / 3.0, a * 0.2, u_star)
        N = layout.n_phi + layout.n_ux + layout.n_uy
        dense = ops.assemble_dense(op, N)
        probed = probe_sparse(op, layout, reach=5).toarray()
        out.append(CheckResult("coupled operator probe equivalence",
                               np.abs(dense - probed).max() / np.abs(dense).max(), tol))

        # coercivity: pairing with (M zeta - beta C du, du) leaves only non-negative terms
        zeta, du = _scalar(g, rng), _face(g, rng)
        r1, r2 = op.apply_fields(zeta, du)
        b = op.beta
        phi_t = prm.M * zeta - b * ops.advect_scalar(du, op.phi_star)
        pair = inner(r1, phi_t) + inner_face(r2, du)
        Ddu = ops.deformation(du)
        diss = inner_tensor(ops.stress(Ddu, op.ga, prm.mu1, prm.mu4, prm.mu5), Ddu)
        expect = (prm.M * inner(zeta, zeta) + b * prm.K * inner(elastic_operator(op.ga, phi_t, prm.eps), phi_t)
                  + b * inner_face(du, du) + b * b * diss)
        out.append(CheckResult("coupled coercivity identity", _rel(pair, expect, abs(expect)), tol))
        out.append(CheckResult("coupled coercivity positive", 0.0 if expect > 0 and diss >= 0 else 1.0, tol))

        # round-trip solves
        x0 = rng.standard_normal(N)
        X, _, _ = solve_coupled(op, op(x0), SolverConfig())
        out.append(CheckResult("coupled solve round trip",
                               np.linalg.norm(X - x0) / np.linalg.norm(x0), 1e-9))
        q0 = _scalar(g, rng)
        q0 = q0 - float(np.mean(q0.values))
        q, _, _ = PressureSolver(g).solve(0.3 * ops.laplacian(q0), 0.3)
        out.append(CheckResult("pressure solve round trip", norm(q - q0) / norm(q0), 1e-9))

        # two paths to the same IEQ update
        Un, Up = _scalar(g, rng), _scalar(g, rng)
        pn, pp, pnew = _scalar(g, rng), _scalar(g, rng), _scalar(g, rng)
        cn_a = ieq.update_U_cn(Un, pnew, pn, a)
        cn_b = 2.0 * ieq.U_half_cn(Un, pnew, pn, a) - Un
        out.append(CheckResult("U update cn2 two paths", norm(cn_a - cn_b) / norm(cn_a), tol))
        bd_a = ieq.update_U_bdf(Un, Up, pnew, pn, pp, a)
        bd_b = ieq.U_bdf_eliminated(Un, Up, pnew, pn, pp, a)
        out.append(CheckResult("U update bdf2 two paths", norm(bd_a - bd_b) / norm(bd_a), tol))
    return out
