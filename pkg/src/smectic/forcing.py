"""Manufactured solutions, the magnetic-field source and shear wall data.

Manufactured sources are attached to the layer equation and the momentum
equation in their chemical-potential form::

    g_phi = phi_t + div(u phi) + M w
    g_u   = u_t + (u.grad)u - div sigma(u, phi) + grad p + phi grad w

with ``w`` the variational derivative of the free energy of the exact
``phi``. Writing the residuals this way keeps them O(1) even though the
scheme itself carries ``w = -phi_dot/M`` with a small mobility.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import mpmath
import numpy as np
import sympy as sp

from . import operators as ops
from .fields import FaceVectorField, Grid, ScalarField
from .ieq import Params

log = logging.getLogger(__name__)

_t, _x, _y = sp.symbols("t x y", real=True)

SHEAR_BOUNDS = (-1.0, 1.0, -0.5, 0.5)
MANUFACTURED_BOUNDS = (0.0, 2.0, 0.0, 2.0)


class ForcingValidationError(RuntimeError):
    pass


FORCING_MODES = ("continuous", "discrete")


def _default_stream():
    return sp.sin(sp.pi * _x) ** 2 * sp.sin(sp.pi * _y) ** 2 * sp.sin(_t)


def _default_expressions():
    pi = sp.pi
    u = pi * sp.sin(2 * pi * _y) * sp.sin(pi * _x) ** 2 * sp.sin(_t)
    v = -pi * sp.sin(2 * pi * _x) * sp.sin(pi * _y) ** 2 * sp.sin(_t)
    phi = 2 + sp.cos(pi * _x) * sp.cos(pi * _y) * sp.sin(_t)
    p = sp.cos(pi * _x) * sp.sin(pi * _y) * sp.sin(_t)
    return u, v, phi, p


def _symbolic_residuals(u, v, phi, p, params: Params):
    """Closed-form ``(w, g_phi, g_u, g_v)`` for the given exact fields."""
    d = sp.diff
    K, eps, M = sp.nsimplify(params.K), sp.nsimplify(params.eps), sp.nsimplify(params.M)
    mu1, mu4, mu5 = (sp.nsimplify(c) for c in (params.mu1, params.mu4, params.mu5))
    px, py = d(phi, _x), d(phi, _y)
    W = px**2 + py**2 - 1
    lap = lambda f: d(f, _x, 2) + d(f, _y, 2)
    w = K * (lap(lap(phi)) - (d(W * px, _x) + d(W * py, _y)) / eps**2)
    if params.tau > 0:
        c = sp.nsimplify(params.magnetic_coefficient)
        hx, hy = (sp.nsimplify(a) for a in params.h)
        s = px * hx + py * hy
        w = w + c * (d(s * hx, _x) + d(s * hy, _y))
    g_phi = d(phi, _t) + d(u * phi, _x) + d(v * phi, _y) + M * w

    Dxx, Dyy = d(u, _x), d(v, _y)
    Dxy = (d(u, _y) + d(v, _x)) / 2
    sdg = px * px * Dxx + 2 * px * py * Dxy + py * py * Dyy
    dgx, dgy = Dxx * px + Dxy * py, Dxy * px + Dyy * py
    Sxx = mu1 * sdg * px * px + mu4 * Dxx + 2 * mu5 * dgx * px
    Syy = mu1 * sdg * py * py + mu4 * Dyy + 2 * mu5 * dgy * py
    Sxy = mu1 * sdg * px * py + mu4 * Dxy + mu5 * (dgx * py + px * dgy)
    g_u = (d(u, _t) + u * d(u, _x) + v * d(u, _y) - d(Sxx, _x) - d(Sxy, _y)
           + d(p, _x) + phi * d(w, _x))
    g_v = (d(v, _t) + u * d(v, _x) + v * d(v, _y) - d(Sxy, _x) - d(Syy, _y)
           + d(p, _y) + phi * d(w, _y))
    return w, g_phi, g_u, g_v


@dataclass
class ExactSolution:
    """Closed-form ``u, v, phi, p`` with compensating sources for given parameters."""

    params: Params
    bounds: tuple[float, float, float, float] = MANUFACTURED_BOUNDS
    expressions: tuple = field(default_factory=_default_expressions)
    stream: object = field(default_factory=_default_stream)

    @cached_property
    def _fn(self):
        u, v, phi, p = self.expressions
        w, g_phi, g_u, g_v = _symbolic_residuals(u, v, phi, p, self.params)
        names = dict(u=u, v=v, phi=phi, p=p, w=w, g_phi=g_phi, g_u=g_u, g_v=g_v,
                     phi_t=sp.diff(phi, _t), stream=self.stream, stream_t=sp.diff(self.stream, _t))
        return {k: sp.lambdify((_t, _x, _y), e, "numpy") for k, e in names.items()}

    def check_stream(self, tol: float = 1e-12) -> None:
        """The stream function must reproduce ``(u, v)``."""
        u, v = self.expressions[:2]
        ru = sp.simplify(sp.diff(self.stream, _y) - u)
        rv = sp.simplify(-sp.diff(self.stream, _x) - v)
        if ru != 0 or rv != 0:
            raise ForcingValidationError("stream function does not match the exact velocity")

    def _curl(self, grid: Grid, name: str, t: float) -> FaceVectorField:
        """Discretely divergence-free velocity from nodal stream-function samples."""
        xn, yn = grid.nodes()
        s = self.evaluate(name, t, xn, yn)
        ux = (s[:, 1:] - s[:, :-1]) / grid.hy
        uy = -(s[1:, :] - s[:-1, :]) / grid.hx
        return FaceVectorField(grid, ux, uy).with_zero_normal_trace()

    def evaluate(self, name: str, t: float, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self._fn[name](t, x, y), np.broadcast(x, y).shape).astype(float)

    def _check_grid(self, grid: Grid):
        if not np.allclose(grid.bounds, self.bounds, rtol=0, atol=1e-12):
            raise ValueError(f"exact solution is defined on {self.bounds}, grid has {grid.bounds}")

    def exact_fields(self, grid: Grid, t: float, mode: str = "continuous"):
        """``(phi, u, p)`` at their staggered locations.

        ``mode="discrete"`` takes the velocity as the discrete curl of the
        stream function, which is the exact solution of the semi-discrete
        problem driven by :meth:`forcing` in the same mode.
        """
        self._check_grid(grid)
        phi = ScalarField(grid, self.evaluate("phi", t, *grid.centers()))
        p = ScalarField(grid, self.evaluate("p", t, *grid.centers()))
        if mode == "discrete":
            u = self._curl(grid, "stream", t)
        else:
            u = FaceVectorField(grid, self.evaluate("u", t, *grid.xfaces()), self.evaluate("v", t, *grid.yfaces()))
        return phi, u, p

    def forcing(self, grid: Grid, mode: str = "continuous"):
        """Callable ``t -> (g_phi, g_u)`` sampled on ``grid``.

        ``continuous`` samples the closed-form residuals pointwise.
        ``discrete`` evaluates the same residuals with the grid operators
        applied to the sampled exact fields, so the semi-discrete system is
        satisfied exactly and only the time discretisation error remains.
        """
        if mode not in FORCING_MODES:
            raise ValueError(f"unknown forcing mode {mode!r}")
        self._check_grid(grid)
        if mode == "discrete":
            return self._discrete_forcing(grid)
        xc, yc = grid.centers()
        xa, ya = grid.xfaces()
        xb, yb = grid.yfaces()

        def f(t):
            gphi = ScalarField(grid, self.evaluate("g_phi", t, xc, yc))
            gu = FaceVectorField(grid, self.evaluate("g_u", t, xa, ya), self.evaluate("g_v", t, xb, yb))
            return gphi, gu.with_zero_normal_trace()

        return f

    def validate(self, n_points: int = 4, seed: int = 0, tol: float = 1e-8, dps: int = 40,
                 step: float = 1e-3) -> float:
        """Compare the closed-form sources with a finite-difference oracle; returns the max error."""
        rng = np.random.default_rng(seed)
        x0, x1, y0, y1 = self.bounds
        oracle = _FDOracle(self.expressions, self.params, dps=dps, step=step)
        worst = 0.0
        for _ in range(n_points):
            t = float(rng.uniform(0.1, 1.0))
            x = float(rng.uniform(x0, x1))
            y = float(rng.uniform(y0, y1))
            ref = oracle.residuals(t, x, y)
            got = [float(self.evaluate(k, t, x, y)) for k in ("g_phi", "g_u", "g_v")]
            for r, gv in zip(ref, got):
                err = abs(gv - r) / max(1.0, abs(r))
                worst = max(worst, err)
        if worst > tol:
            raise ForcingValidationError(f"manufactured forcing disagrees with FD oracle: {worst:.3e}")
        return worst


    def _discrete_forcing(self, grid: Grid):
        from .ieq import chemical_potential_direct

        prm = self.params
        xc, yc = grid.centers()

        def f(t):
            phi, u, p = self.exact_fields(grid, t, mode="discrete")
            u_t = self._curl(grid, "stream_t", t)
            w = chemical_potential_direct(phi, prm)
            g_phi = ScalarField(grid, self.evaluate("phi_t", t, xc, yc)) + ops.advect_scalar(u, phi) + prm.M * w
            sig = ops.stress(ops.deformation(u), ops.grad(phi), prm.mu1, prm.mu4, prm.mu5)
            g_u = (u_t + ops.convect(u, u) - ops.tensor_div(sig) + ops.grad(p)
                   + ops.weighted_grad(phi, w))
            return g_phi, g_u.with_zero_normal_trace()

        return f


def manufactured_forcing(grid: Grid, params: Params, t: float, exact: ExactSolution | None = None):
    """``(g_phi, g_u)`` of the default manufactured solution at time ``t``."""
    exact = exact or ExactSolution(params)
    return exact.forcing(grid)(t)


# --- finite-difference oracle ---------------------------------------------

def _central_weights(order: int):
    """Eighth-order accurate central weights for a derivative of the given order."""
    m = 4 + (order - 1) // 2
    pts = list(range(-m, m + 1))
    w = sp.finite_diff_weights(order, pts, 0)[order][-1]
    return [(k, int(sp.Rational(c).p), int(sp.Rational(c).q)) for k, c in zip(pts, w) if c != 0]


class _FDOracle:
    """Evaluates the residuals from pointwise values only, by nested FD stencils in mpmath."""

    def __init__(self, expressions, params: Params, dps: int, step: float):
        self.dps = dps
        self.step = step
        self.p = params
        self._f = {k: sp.lambdify((_t, _x, _y), e, "mpmath") for k, e in zip(("u", "v", "phi", "p"), expressions)}
        self._w = {k: _central_weights(k) for k in range(1, 5)}

    def D(self, f, t, x, y, kt=0, kx=0, ky=0):
        """Mixed partial of ``f`` via tensor-product stencils."""
        terms = [((), mpmath.mpf(1))]
        for axis, k in ((0, kt), (1, kx), (2, ky)):
            if k == 0:
                continue
            terms = [(shift + ((axis, j),), c * mpmath.mpf(num) / den)
                     for shift, c in terms for j, num, den in self._w[k]]
        total = mpmath.mpf(0)
        h = mpmath.mpf(self.step)
        scale = h ** (kt + kx + ky)
        for shift, c in terms:
            pt = [t, x, y]
            for axis, j in shift:
                pt[axis] = pt[axis] + j * h
            total += c * f(*pt)
        return total / scale

    def w(self, t, x, y):
        phi, D, p = self._f["phi"], self.D, self.p
        fx, fy = D(phi, t, x, y, kx=1), D(phi, t, x, y, ky=1)
        fxx, fyy, fxy = D(phi, t, x, y, kx=2), D(phi, t, x, y, ky=2), D(phi, t, x, y, kx=1, ky=1)
        bih = D(phi, t, x, y, kx=4) + 2 * D(phi, t, x, y, kx=2, ky=2) + D(phi, t, x, y, ky=4)
        W = fx**2 + fy**2 - 1
        Wx = 2 * (fx * fxx + fy * fxy)
        Wy = 2 * (fx * fxy + fy * fyy)
        val = p.K * (bih - (W * (fxx + fyy) + Wx * fx + Wy * fy) / mpmath.mpf(p.eps) ** 2)
        if p.tau > 0:
            hx, hy = p.h
            val += p.magnetic_coefficient * (hx * hx * fxx + 2 * hx * hy * fxy + hy * hy * fyy)
        return val

    def sigma(self, t, x, y):
        f, D, p = self._f, self.D, self.p
        gx, gy = D(f["phi"], t, x, y, kx=1), D(f["phi"], t, x, y, ky=1)
        Dxx, Dyy = D(f["u"], t, x, y, kx=1), D(f["v"], t, x, y, ky=1)
        Dxy = (D(f["u"], t, x, y, ky=1) + D(f["v"], t, x, y, kx=1)) / 2
        s = gx * gx * Dxx + 2 * gx * gy * Dxy + gy * gy * Dyy
        dgx, dgy = Dxx * gx + Dxy * gy, Dxy * gx + Dyy * gy
        return (p.mu1 * s * gx * gx + p.mu4 * Dxx + 2 * p.mu5 * dgx * gx,
                p.mu1 * s * gy * gy + p.mu4 * Dyy + 2 * p.mu5 * dgy * gy,
                p.mu1 * s * gx * gy + p.mu4 * Dxy + p.mu5 * (dgx * gy + gx * dgy))

    def residuals(self, t, x, y):
        with mpmath.workdps(self.dps):
            t, x, y = mpmath.mpf(t), mpmath.mpf(x), mpmath.mpf(y)
            f, D = self._f, self.D
            u, v, phi = f["u"](t, x, y), f["v"](t, x, y), f["phi"](t, x, y)
            uphi = lambda tt, xx, yy: f["u"](tt, xx, yy) * f["phi"](tt, xx, yy)
            vphi = lambda tt, xx, yy: f["v"](tt, xx, yy) * f["phi"](tt, xx, yy)
            g_phi = (D(f["phi"], t, x, y, kt=1) + D(uphi, t, x, y, kx=1) + D(vphi, t, x, y, ky=1)
                     + self.p.M * self.w(t, x, y))
            sxx = lambda tt, xx, yy: self.sigma(tt, xx, yy)[0]
            syy = lambda tt, xx, yy: self.sigma(tt, xx, yy)[1]
            sxy = lambda tt, xx, yy: self.sigma(tt, xx, yy)[2]
            wx = D(self.w, t, x, y, kx=1)
            wy = D(self.w, t, x, y, ky=1)
            g_u = (D(f["u"], t, x, y, kt=1) + u * D(f["u"], t, x, y, kx=1) + v * D(f["u"], t, x, y, ky=1)
                   - D(sxx, t, x, y, kx=1) - D(sxy, t, x, y, ky=1) + D(f["p"], t, x, y, kx=1) + phi * wx)
            g_v = (D(f["v"], t, x, y, kt=1) + u * D(f["v"], t, x, y, kx=1) + v * D(f["v"], t, x, y, ky=1)
                   - D(sxy, t, x, y, kx=1) - D(syy, t, x, y, ky=1) + D(f["p"], t, x, y, ky=1) + phi * wy)
            return float(g_phi), float(g_u), float(g_v)


# --- magnetic field and shear walls -----------------------------------------

def magnetic_source(phi_star: ScalarField, params: Params) -> ScalarField:
    """``-M c div((grad phi* . h) h)`` for the layer-equation right side.

    ``c = 2 tau`` (energy-consistent) or ``tau`` (literal convention).
    """
    if params.tau == 0:
        return ScalarField.zeros(phi_star.grid)
    s = ops.grad_dot_h(ops.grad(phi_star), params.h)
    return -params.M * params.magnetic_coefficient * ops.magnetic_div(s, params.h)


def shear_bc(t: float = 0.0, grid: Grid | None = None, speed: float = 0.2) -> ops.BcSpec:
    """Tangential wall data of the shear experiment (time independent)."""
    if grid is not None and not np.allclose(grid.bounds, SHEAR_BOUNDS, rtol=0, atol=1e-12):
        raise ValueError(f"shear data requires the domain {SHEAR_BOUNDS}")
    return ops.BcSpec(top=speed, bottom=-speed, left=0.0, right=0.0)
