"""Matrix-free Step-1 operator, restarted GMRES, and the Neumann pressure solve.

Two equivalent coupled unknowns are supported. The default potential form
solves for ``(zeta, du)`` with ``dphi = M zeta - beta C du + c0``, which keeps
both blocks O(1) for small mobility. The increment form solves for
``(dphi, du)`` directly. Either way the flat vector is
``[first block (nx*ny), du_x interior faces, du_y interior faces]``. Cells and
interior faces share the weight ``hx*hy``, so the Euclidean inner product on
the flat vector is the discrete L2 one up to a constant.

The operator is stiff (the elastic coupling behaves like a sixth-order
operator), so by default the Krylov iteration is right-preconditioned with a
sparse LU of the operator, assembled by probing the matrix-free apply. The
factor is reused across steps and refreshed lazily: a solve that needs more
than ``refactor_iterations`` iterations marks it stale for the next step, and
an unconverged solve with a stale factor refactors and retries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import operators as ops
from .fields import FaceVectorField, Grid, ScalarField

log = logging.getLogger(__name__)

PRECONDITIONERS = ("lu", "diagonal", "none")
FORMULATIONS = ("potential", "increment")


class SolverError(RuntimeError):
    def __init__(self, msg, residual=None, iterations=None):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-12
    atol: float = 1e-300
    maxiter: int = 500
    restart: int = 60
    preconditioner: str = "lu"
    refactor_iterations: int = 20
    backward_tol: float = 1e-14
    formulation: str = "potential"
    pressure_rtol: float = 1e-13
    pressure_maxiter: int = 200

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.pressure_rtol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.restart < 1 or self.maxiter < 1:
            raise ValueError("restart and maxiter must be positive")


# --- coupled vector layout ----------------------------------------------------

class CoupledLayout:
    def __init__(self, grid: Grid):
        self.grid = grid
        nx, ny = grid.nx, grid.ny
        self.n_phi = nx * ny
        self.n_ux = (nx - 1) * ny
        self.n_uy = nx * (ny - 1)
        self.size = self.n_phi + self.n_ux + self.n_uy

    def pack(self, phi: ScalarField, u: FaceVectorField) -> np.ndarray:
        return np.concatenate([phi.values.ravel(), u.ux[1:-1].ravel(), u.uy[:, 1:-1].ravel()])

    def unpack(self, x: np.ndarray) -> tuple[ScalarField, FaceVectorField]:
        g = self.grid
        phi = ScalarField(g, x[: self.n_phi].reshape(g.nx, g.ny), check=False)
        ux = np.zeros((g.nx + 1, g.ny))
        uy = np.zeros((g.nx, g.ny + 1))
        ux[1:-1] = x[self.n_phi: self.n_phi + self.n_ux].reshape(g.nx - 1, g.ny)
        uy[:, 1:-1] = x[self.n_phi + self.n_ux:].reshape(g.nx, g.ny - 1)
        return phi, FaceVectorField(g, ux, uy, check=False)

    def positions(self):
        """Doubled integer coordinates and per-block (i, j) indices of every unknown."""
        g = self.grid
        blocks = []
        i, j = np.meshgrid(np.arange(g.nx), np.arange(g.ny), indexing="ij")
        blocks.append((i.ravel(), j.ravel(), 1, 1))
        i, j = np.meshgrid(np.arange(1, g.nx), np.arange(g.ny), indexing="ij")
        blocks.append((i.ravel(), j.ravel(), 0, 1))
        i, j = np.meshgrid(np.arange(g.nx), np.arange(1, g.ny), indexing="ij")
        blocks.append((i.ravel(), j.ravel(), 1, 0))
        return blocks


# --- the Step-1 operator ------------------------------------------------------

class CoupledOperator:
    """Left side of the reduced Step-1 system for either scheme.

    With ``beta = dt/2`` this is the Crank-Nicolson system, with
    ``beta = 2 dt/3`` the BDF2 one::

        dphi + beta C du + beta K M lap^2 dphi - 2 beta (K M / eps^2) div(N* N grad dphi)
        M beta du + M beta^2 B(u*, du) - M beta^2 div sigma(du) - beta a grad(dphi + beta C du)

    where ``C du = div(du a)``, ``a`` is the extrapolated layer function and
    ``N w = grad(a) . w`` collocated at centres.
    """

    def __init__(self, grid: Grid, params, beta: float, phi_star: ScalarField, u_star: FaceVectorField):
        self.grid = grid
        self.layout = CoupledLayout(grid)
        self.params = params
        self.beta = float(beta)
        self.phi_star = phi_star
        self.u_star = u_star
        self.ga = ops.grad(phi_star)

    def apply_fields(self, dphi: ScalarField, du: FaceVectorField):
        p = self.params
        b = self.beta
        KM = p.K * p.M
        C_du = ops.advect_scalar(du, self.phi_star)
        row_phi = (dphi + b * C_du + (b * KM) * ops.biharmonic(dphi)
                   - (2.0 * b * KM / p.eps**2)
                   * ops.div(ops.grad_product_adjoint(self.ga, ops.grad_product(self.ga, ops.grad(dphi)))))
        s = dphi + b * C_du
        row_u = p.M * b * du - b * ops.weighted_grad(self.phi_star, s)
        mb2 = p.M * b * b
        if mb2 != 0.0:
            row_u = row_u + mb2 * ops.convect(self.u_star, du)
            sig = ops.stress(ops.deformation(du), self.ga, p.mu1, p.mu4, p.mu5)
            row_u = row_u - mb2 * ops.tensor_div(sig)
        return row_phi, row_u

    def __call__(self, x: np.ndarray) -> np.ndarray:
        dphi, du = self.layout.unpack(x)
        return self.layout.pack(*self.apply_fields(dphi, du))


def elastic_operator(ga: FaceVectorField, f: ScalarField, eps: float) -> ScalarField:
    """``Q f = lap^2 f - (2/eps^2) div(N* N grad f)``, the linearised elastic operator."""
    return ops.biharmonic(f) - (2.0 / eps**2) * ops.div(ops.grad_product_adjoint(ga, ops.grad_product(ga, ops.grad(f))))


class PotentialOperator(CoupledOperator):
    """The same Step-1 system after the change of unknowns ``dphi = M zeta - beta C du + c0``.

    ``zeta = gamma phi_dot / M`` is a scaled chemical potential; with it every
    row is O(1) in the mobility and the momentum row no longer balances two
    large, nearly cancelling phase terms::

        zeta + beta K M Q zeta - beta^2 K Q C du
        beta du + beta^2 B(u*, du) - beta^2 div sigma(du) - beta a grad(zeta)
    """

    def apply_fields(self, zeta: ScalarField, du: FaceVectorField):
        p = self.params
        b = self.beta
        C_du = ops.advect_scalar(du, self.phi_star)
        row_phi = zeta + (b * p.K) * elastic_operator(self.ga, p.M * zeta - b * C_du, p.eps)
        row_u = b * du - b * ops.weighted_grad(self.phi_star, zeta)
        b2 = b * b
        row_u = row_u + b2 * ops.convect(self.u_star, du)
        sig = ops.stress(ops.deformation(du), self.ga, p.mu1, p.mu4, p.mu5)
        row_u = row_u - b2 * ops.tensor_div(sig)
        return row_phi, row_u


def apply_cn(grid, params, phi_star, u_star) -> CoupledOperator:
    return CoupledOperator(grid, params, params.dt / 2.0, phi_star, u_star)


def apply_bdf(grid, params, phi_star, u_star) -> CoupledOperator:
    return CoupledOperator(grid, params, 2.0 * params.dt / 3.0, phi_star, u_star)


# --- probing ------------------------------------------------------------------

def probe_sparse(apply, layout: CoupledLayout, reach: int = 4) -> sp.csr_matrix:
    """Assemble a banded linear map from ``3 (reach+1)^2`` applies.

    ``reach`` bounds the coupling distance in half-cell units (Chebyshev);
    unknowns of one block sharing ``(i mod s, j mod s)`` with ``s = reach + 1``
    never reach the same output, so each probe response is unambiguous.
    """
    s = reach + 1
    blocks = layout.positions()
    offsets = np.cumsum([0] + [len(b[0]) for b in blocks])
    out_px = np.concatenate([2 * b[0] + b[2] for b in blocks])
    out_py = np.concatenate([2 * b[1] + b[3] for b in blocks])
    rows, cols, vals = [], [], []
    for k, (bi, bj, ox, oy) in enumerate(blocks):
        ni = bi.max() + 1
        nj = bj.max() + 1
        # index of block-k unknown (i, j), -1 if absent
        lookup = -np.ones((ni + 1, nj + 1), dtype=np.int64)
        lookup[bi, bj] = offsets[k] + np.arange(len(bi))
        for ci in range(s):
            for cj in range(s):
                mask = (bi % s == ci) & (bj % s == cj)
                if not mask.any():
                    continue
                e = np.zeros(layout.size)
                e[offsets[k] + np.nonzero(mask)[0]] = 1.0
                y = apply(e)
                nz = np.nonzero(y)[0]
                if nz.size == 0:
                    continue
                # nearest same-colour input index to each output position
                ti = (out_px[nz] - ox) / 2.0
                tj = (out_py[nz] - oy) / 2.0
                ii = ci + s * np.round((ti - ci) / s).astype(np.int64)
                jj = cj + s * np.round((tj - cj) / s).astype(np.int64)
                ok = (ii >= 0) & (jj >= 0) & (ii <= ni) & (jj <= nj)
                col = np.full(nz.size, -1, dtype=np.int64)
                col[ok] = lookup[ii[ok], jj[ok]]
                ok &= col >= 0
                rows.append(nz[ok])
                cols.append(col[ok])
                vals.append(y[nz[ok]])
    n = layout.size
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


# --- GMRES --------------------------------------------------------------------

def gmres(apply, b: np.ndarray, x0=None, precond=None, rtol=1e-12, atol=1e-300,
          restart=60, maxiter=500, backward=None):
    """Restarted right-preconditioned GMRES (modified Gram-Schmidt, Givens rotations).

    Returns ``(x, relative_residual, iterations, converged)`` with the true
    residual ``|b - A x| / |b|`` recomputed at every restart. ``backward =
    (norm_A, tol)`` also stops once ``|r| <= tol (norm_A |x| + |b|)``.
    """
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0.0, 0, True
    target = max(rtol * bnorm, atol)
    M = precond if precond is not None else (lambda v: v)
    total = 0
    r = b - apply(x)
    beta = np.linalg.norm(r)
    def goal():
        if backward is None:
            return target
        return max(target, backward[1] * (backward[0] * np.linalg.norm(x) + bnorm))

    while True:
        cycle_target = goal()
        if beta <= cycle_target:
            return x, beta / bnorm, total, True
        if total >= maxiter:
            return x, beta / bnorm, total, False
        m = min(restart, maxiter - total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        gvec = np.zeros(m + 1)
        gvec[0] = beta
        V[0] = r / beta
        k_used = 0
        for k in range(m):
            Z[k] = M(V[k])
            w = apply(Z[k])
            for i in range(k + 1):
                H[i, k] = np.dot(w, V[i])
                w -= H[i, k] * V[i]
            # one reorthogonalisation pass keeps the tiny residuals honest
            for i in range(k + 1):
                c = np.dot(w, V[i])
                H[i, k] += c
                w -= c * V[i]
            h_next = np.linalg.norm(w)
            H[k + 1, k] = h_next
            if h_next > 0:
                V[k + 1] = w / h_next
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            cs[k] = H[k, k] / denom
            sn[k] = H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            gvec[k + 1] = -sn[k] * gvec[k]
            gvec[k] = cs[k] * gvec[k]
            total += 1
            k_used = k + 1
            if abs(gvec[k + 1]) <= cycle_target or h_next == 0.0:
                break
        y = np.linalg.solve(np.triu(H[:k_used, :k_used]), gvec[:k_used])
        x = x + y @ Z[:k_used]
        r = b - apply(x)
        new_beta = np.linalg.norm(r)
        if new_beta > 0.5 * beta:
            # no real progress over a whole cycle: rounding floor reached
            return x, new_beta / bnorm, total, new_beta <= target
        beta = new_beta


class CoupledSolver:
    """Owns the (reused) preconditioner for the Step-1 solves.

    A solve is accepted when the relative residual reaches ``rtol`` or, if
    the iteration stagnates first, when the normwise backward error
    ``|r| / (|A| |x| + |b|)`` is below ``backward_tol``. The second test
    matters because the small mobility makes ``|A| |x|`` exceed ``|b|`` by
    many orders, which puts a ``1e-12`` relative residual below the
    double-precision floor on some steps.
    """

    def __init__(self, layout: CoupledLayout, cfg: SolverConfig):
        self.layout = layout
        self.cfg = cfg
        self._lu = None
        self._scale = None
        self._norm = None
        self._beta = None
        self._kind = None
        self._stale = True
        self.factorizations = 0
        self.last_backward_error = float("nan")

    def _refresh(self, op: CoupledOperator):
        A = probe_sparse(op, self.layout, reach=5)
        if self.cfg.preconditioner == "none":
            self._scale = np.ones(self.layout.size)
        else:
            d = np.abs(A.diagonal())
            d[d == 0] = 1.0
            self._scale = 1.0 / np.sqrt(d)
        S = sp.diags(self._scale)
        As = (S @ A @ S).tocsc()
        self._norm = np.sqrt(spla.norm(As, 1) * spla.norm(As, np.inf))
        self._lu = None
        if self.cfg.preconditioner == "lu":
            self._lu = spla.splu(As)
            self.factorizations += 1
        self._beta = op.beta
        self._kind = type(op)
        self._stale = False

    def solve(self, op: CoupledOperator, rhs: np.ndarray, x0=None):
        """Solve ``op(X) = rhs``; returns ``(X, relative residual, iterations)``."""
        if not np.isfinite(rhs).all():
            raise SolverError("non-finite right-hand side")
        if np.linalg.norm(rhs) == 0.0:
            return np.zeros_like(rhs), 0.0, 0
        fresh = False
        if self._stale or self._beta != op.beta or self._kind is not type(op):
            self._refresh(op)
            fresh = True
        x, res, its, bw = self._solve_scaled(op, rhs, x0)
        converged = res <= self.cfg.rtol or bw <= self.cfg.backward_tol
        if not converged and not fresh:
            log.debug("stale coupled preconditioner failed after %d iterations; refactoring", its)
            self._refresh(op)
            x, res, its2, bw = self._solve_scaled(op, rhs, x)
            its += its2
        # a slow solve marks the factorisation stale for the next one
        self._stale = self.cfg.preconditioner == "lu" and its > self.cfg.refactor_iterations
        self.last_backward_error = bw
        if not (res <= self.cfg.rtol or bw <= self.cfg.backward_tol):
            raise SolverError(f"coupled solve did not converge: residual {res:.3e}, backward error "
                              f"{bw:.3e} after {its} iterations", residual=res, iterations=its)
        return x, res, its

    def _solve_scaled(self, op, rhs, x0):
        S = self._scale
        apply = lambda y: S * op(S * y)
        precond = None if self._lu is None else self._lu.solve
        y0 = None if x0 is None else np.asarray(x0) / S
        b = S * rhs
        y, res, its, _ = gmres(apply, b, x0=y0, precond=precond, rtol=self.cfg.rtol,
                               atol=self.cfg.atol, restart=self.cfg.restart, maxiter=self.cfg.maxiter,
                               backward=(self._norm, self.cfg.backward_tol))
        bnorm = np.linalg.norm(b)
        bw = res * bnorm / (self._norm * np.linalg.norm(y) + bnorm)
        return S * y, res, its, bw


def solve_coupled(op: CoupledOperator, rhs: np.ndarray, cfg: SolverConfig | None = None, x0=None):
    """One-off coupled solve with a fresh preconditioner."""
    cfg = cfg or SolverConfig()
    return CoupledSolver(op.layout, cfg).solve(op, rhs, x0=x0)


# --- pressure -----------------------------------------------------------------

class PressureSolver:
    """``factor * lap q = rhs`` with homogeneous Neumann data and mean-zero ``q``.

    Preconditioned conjugate gradients on ``-lap``; the preconditioner is the
    exact cosine-transform inverse of the uniform-grid Neumann Laplacian, so
    the iteration normally stops after one or two sweeps.
    """

    def __init__(self, grid: Grid, rtol: float = 1e-13, maxiter: int = 200):
        self.grid = grid
        self.rtol = rtol
        self.maxiter = maxiter
        kx = np.arange(grid.nx)
        ky = np.arange(grid.ny)
        lx = (2 - 2 * np.cos(np.pi * kx / grid.nx)) / grid.hx**2
        ly = (2 - 2 * np.cos(np.pi * ky / grid.ny)) / grid.hy**2
        lam = lx[:, None] + ly[None, :]
        lam[0, 0] = np.inf
        self._inv = 1.0 / lam

    def _precond(self, r: np.ndarray) -> np.ndarray:
        z = scipy.fft.idctn(scipy.fft.dctn(r, type=2, norm="ortho") * self._inv, type=2, norm="ortho")
        return z - z.mean()

    def solve(self, rhs: ScalarField, factor: float) -> tuple[ScalarField, float, int]:
        g = self.grid
        b = -rhs.values / factor
        total = np.abs(b).sum()
        if abs(b.sum()) > 1e-10 * total + 1e-300:
            raise SolverError(f"incompatible Neumann right-hand side (sum {b.sum():.3e})")
        b = b - b.mean()
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return ScalarField.zeros(g), 0.0, 0

        def A(q):
            return -ops.laplacian(ScalarField(g, q, check=False)).values

        x = np.zeros_like(b)
        r = b.copy()
        z = self._precond(r)
        p = z.copy()
        rz = np.vdot(r, z)
        res = 1.0
        for it in range(1, self.maxiter + 1):
            Ap = A(p)
            alpha = rz / np.vdot(p, Ap)
            x += alpha * p
            r -= alpha * Ap
            r -= r.mean()
            res = np.linalg.norm(r) / bnorm
            if res <= self.rtol:
                break
            z = self._precond(r)
            rz_new = np.vdot(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        else:
            raise SolverError(f"pressure solve did not converge: residual {res:.3e}", residual=res,
                              iterations=self.maxiter)
        x -= x.mean()
        return ScalarField(g, x), res, it


def solve_pressure(rhs: ScalarField, factor: float, rtol: float = 1e-13) -> ScalarField:
    q, _, _ = PressureSolver(rhs.grid, rtol=rtol).solve(rhs, factor)
    return q
