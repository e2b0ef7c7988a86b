"""Model parameters, the time-level state and the IEQ bookkeeping shared by both schemes.

The auxiliary variable ``U`` stands in for ``|grad phi|^2 - 1`` and is advanced
by a linear ODE, which is what makes the Ginzburg-Landau penalty quadratic.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .fields import FaceVectorField, ScalarField

MAGNETIC_CONVENTIONS = ("energy_consistent", "paper_literal")


@dataclass(frozen=True)
class Params:
    K: float = 0.01
    eps: float = 0.05
    M: float = 1e-6
    mu1: float = 0.0
    mu4: float = 0.02
    mu5: float = 0.0
    dt: float = 0.01
    tau: float = 0.0
    h: tuple[float, float] = (1.0, 0.0)
    magnetic_convention: str = "energy_consistent"

    def __post_init__(self):
        for name in ("K", "eps", "M", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("mu1", "mu4", "mu5", "tau"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if abs(np.hypot(*self.h) - 1.0) > 1e-12:
            raise ValueError("h must be a unit vector")
        if self.magnetic_convention not in MAGNETIC_CONVENTIONS:
            raise ValueError(f"unknown magnetic convention {self.magnetic_convention!r}")

    @property
    def magnetic_coefficient(self) -> float:
        # d/dphi of -tau (grad phi . h)^2 carries a factor 2
        return 2.0 * self.tau if self.magnetic_convention == "energy_consistent" else self.tau

    def replace(self, **kw) -> Params:
        return dataclasses.replace(self, **kw)


@dataclass
class SimState:
    phi: ScalarField
    psi: ScalarField
    U: ScalarField
    u: FaceVectorField
    p: ScalarField
    phi_prev: ScalarField
    psi_prev: ScalarField
    U_prev: ScalarField
    u_prev: FaceVectorField
    p_prev: ScalarField
    t: float = 0.0
    step: int = 0
    phi_dot: ScalarField | None = None
    mass0: float = field(default=0.0)

    @property
    def grid(self):
        return self.phi.grid

    def copy(self) -> SimState:
        kw = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            kw[f.name] = v.copy() if hasattr(v, "copy") else v
        return SimState(**kw)


def init_U(phi0: ScalarField) -> ScalarField:
    return ops.grad_product(ops.grad(phi0), ops.grad(phi0)) - 1.0


def extrapolate_half(f_n, f_prev):
    return 1.5 * f_n - 0.5 * f_prev


def extrapolate_full(f_n, f_prev):
    return 2.0 * f_n - f_prev


def update_psi(phi: ScalarField) -> ScalarField:
    return -ops.laplacian(phi)


def update_U_cn(U_n: ScalarField, phi_new: ScalarField, phi_n: ScalarField, phi_star: ScalarField) -> ScalarField:
    """Crank-Nicolson IEQ update ``U+ = U + 2 grad(phi*) . grad(phi+ - phi)``."""
    return U_n + 2.0 * ops.grad_product(ops.grad(phi_star), ops.grad(phi_new - phi_n))


def U_half_cn(U_n: ScalarField, phi_new: ScalarField, phi_n: ScalarField, phi_star: ScalarField) -> ScalarField:
    """Eliminated form ``U^{n+1/2} = S^n + grad(phi*) . grad(phi+)``."""
    ga = ops.grad(phi_star)
    S = U_n - ops.grad_product(ga, ops.grad(phi_n))
    return S + ops.grad_product(ga, ops.grad(phi_new))


def update_U_bdf(U_n, U_prev, phi_new, phi_n, phi_prev, phi_star) -> ScalarField:
    """BDF2 IEQ update from ``3U+ - 4U + U- = 2 grad(phi*) . grad(3phi+ - 4phi + phi-)``."""
    incr = ops.grad_product(ops.grad(phi_star), ops.grad(3.0 * phi_new - 4.0 * phi_n + phi_prev))
    return (4.0 * U_n - U_prev + 2.0 * incr) / 3.0


def U_bdf_eliminated(U_n, U_prev, phi_new, phi_n, phi_prev, phi_star) -> ScalarField:
    """``U+ = Z^n + 2 grad(phi*) . grad(phi+)``."""
    ga = ops.grad(phi_star)
    Z = (4.0 * U_n - U_prev) / 3.0 - 2.0 * ops.grad_product(ga, ops.grad(4.0 * phi_n - phi_prev)) / 3.0
    return Z + 2.0 * ops.grad_product(ga, ops.grad(phi_new))


def chemical_potential_diag(state: SimState, params: Params) -> ScalarField:
    """``w = -phi_dot / M`` from the last completed step."""
    if state.phi_dot is None:
        raise ValueError("no completed step: phi_dot is not available")
    return -state.phi_dot / params.M


def chemical_potential_direct(phi: ScalarField, params: Params) -> ScalarField:
    """``K (lap^2 phi - eps^-2 div((|grad phi|^2 - 1) grad phi))`` evaluated from ``phi`` alone."""
    gphi = ops.grad(phi)
    U = ops.grad_product(gphi, gphi) - 1.0
    w = params.K * (ops.biharmonic(phi) - ops.div(ops.grad_product_adjoint(gphi, U)) / params.eps**2)
    if params.tau > 0:
        w = w + params.magnetic_coefficient * ops.magnetic_div(ops.grad_dot_h(gphi, params.h), params.h)
    return w
