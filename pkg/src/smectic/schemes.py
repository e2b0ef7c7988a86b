"""Crank-Nicolson (CN2) and BDF2 time stepping.

Each step solves one coupled linear system for the layer function and the
intermediate velocity, updates the auxiliary variables, and then projects the
intermediate velocity onto the discretely divergence-free space with a
pressure increment.

Both schemes share one code path, with ``beta = dt/2`` (CN2) or
``beta = 2dt/3`` (BDF2) and ``gamma = dt`` (CN2) or ``gamma = beta`` (BDF2).
By default the unknowns are ``zeta = gamma phi_dot / M`` and the velocity
increment ``du``; the layer increment is recovered as
``dphi = M zeta - beta C du + c0`` with ``C v = div(v a)`` and ``a`` the
extrapolated layer function. ``formulation="increment"`` solves for
``(dphi, du)`` directly.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import ieq
from . import operators as ops
from .fields import FaceVectorField, ScalarField, integrate, norm
from .ieq import Params, SimState
from .linsolve import (CoupledOperator, CoupledSolver, PotentialOperator, PressureSolver, SolverConfig,
                       SolverError, elastic_operator)

log = logging.getLogger(__name__)

SCHEMES = ("cn2", "bdf2")


@dataclass
class StepIntermediates:
    """Quantities captured inside a step for the energy checks."""

    phi_star: ScalarField
    u_star: FaceVectorField
    u_tilde: FaceVectorField
    u_tilde_eval: FaceVectorField  # u~^{n+1/2} (CN2) or u~^{n+1} (BDF2)
    phi_dot: ScalarField
    q: ScalarField


@dataclass
class StepReport:
    scheme: str
    coupled_iterations: int
    coupled_residual: float
    pressure_iterations: int
    pressure_residual: float
    phi_dot_norm: float
    div_tilde_norm: float
    div_norm: float
    wall_time: float
    intermediates: StepIntermediates | None = field(default=None, repr=False)


def bootstrap(phi0: ScalarField, u0: FaceVectorField | None = None, p0: ScalarField | None = None,
              project: bool = True, t0: float = 0.0) -> SimState:
    """Initial state with the history level cloned from the initial data.

    ``u0`` is projected onto discretely divergence-free fields with zero wall
    normal velocity unless ``project`` is false.
    """
    g = phi0.grid
    u0 = FaceVectorField.zeros(g) if u0 is None else u0.with_zero_normal_trace()
    if project and np.any(ops.div(u0).values):
        q, _, _ = PressureSolver(g).solve(ops.div(u0), 1.0)
        u0 = (u0 - ops.grad(q)).with_zero_normal_trace()
    p0 = ScalarField.zeros(g) if p0 is None else p0.copy()
    psi0 = ieq.update_psi(phi0)
    U0 = ieq.init_U(phi0)
    return SimState(phi=phi0.copy(), psi=psi0, U=U0, u=u0, p=p0,
                    phi_prev=phi0.copy(), psi_prev=psi0.copy(), U_prev=U0.copy(),
                    u_prev=u0.copy(), p_prev=p0.copy(), t=t0, step=0, mass0=integrate(phi0))


def mass_check(state: SimState) -> float:
    return integrate(state.phi) - state.mass0


class Stepper:
    """Advances a :class:`SimState` with either scheme, reusing solver set-up between steps.

    ``forcing(t)`` returns ``(g_phi, g_u)`` added to the layer and momentum
    equations, or is ``None``. ``bc`` gives tangential wall velocities.
    """

    def __init__(self, grid, params: Params, solver: SolverConfig | None = None,
                 bc: ops.BcSpec | None = None, forcing=None, capture: bool = False):
        from .forcing import magnetic_source  # local import keeps module graph acyclic

        self.grid = grid
        self.params = params
        self.cfg = solver or SolverConfig()
        self.bc = bc or ops.NO_SLIP
        self.forcing = forcing
        self.capture = capture
        self._magnetic = magnetic_source
        self._coupled = None
        self._pressure = PressureSolver(grid, rtol=self.cfg.pressure_rtol, maxiter=self.cfg.pressure_maxiter)

    def _coupled_solver(self, layout):
        if self._coupled is None:
            self._coupled = CoupledSolver(layout, self.cfg)
        return self._coupled

    def advance(self, state: SimState, scheme: str) -> tuple[SimState, StepReport]:
        if scheme == "cn2":
            return self.cn2_step(state)
        if scheme == "bdf2":
            # first step from cloned history is taken with CN2
            return self.cn2_step(state) if state.step == 0 else self.bdf2_step(state)
        raise ValueError(f"unknown scheme {scheme!r}")

    def cn2_step(self, state: SimState):
        return self._step(state, "cn2")

    def bdf2_step(self, state: SimState):
        if state.step == 0:
            raise ValueError("BDF2 needs two distinct time levels; take a CN2 step first")
        return self._step(state, "bdf2")

    def _step(self, state: SimState, scheme: str):
        t_start = _time.perf_counter()
        p = self.params
        dt = p.dt
        g = self.grid
        if scheme == "cn2":
            beta, gamma = dt / 2.0, dt
            a = ieq.extrapolate_half(state.phi, state.phi_prev)
            u_star = ieq.extrapolate_half(state.u, state.u_prev)
            t_eval = state.t + dt / 2.0
        else:
            beta = gamma = 2.0 * dt / 3.0
            a = ieq.extrapolate_full(state.phi, state.phi_prev)
            u_star = ieq.extrapolate_full(state.u, state.u_prev)
            t_eval = state.t + dt
        ga = ops.grad(a)
        un = state.u

        if self.forcing is not None:
            g_phi, g_u = self.forcing(t_eval)
        else:
            g_phi, g_u = ScalarField.zeros(g), FaceVectorField.zeros(g)

        if scheme == "cn2":
            U0 = state.U
            r_hist = ScalarField.zeros(g)
            ru_hist = FaceVectorField.zeros(g)
            h_hist = ScalarField.zeros(g)
        else:
            dphi_old = state.phi - state.phi_prev
            U0 = ieq.U_bdf_eliminated(state.U, state.U_prev, state.phi, state.phi, state.phi_prev, a)
            r_hist = dphi_old / 3.0
            ru_hist = (beta / 3.0) * (un - state.u_prev)  # scaled by 1/M
            h_hist = -dphi_old / (2.0 * dt)

        C_un = ops.advect_scalar(un, a)
        elastic = (p.K * ops.laplacian(state.psi)
                   + (p.K / p.eps**2) * ops.div(ops.grad_product_adjoint(ga, U0)))
        if p.tau > 0:
            elastic = elastic + self._magnetic(a, p) / p.M
        sig_n = ops.stress(ops.deformation(un, self.bc), ga, p.mu1, p.mu4, p.mu5)
        F_u = g_u - ops.convect(u_star, un) + ops.tensor_div(sig_n) - ops.grad(state.p)

        if self.cfg.formulation == "potential":
            # unknowns (zeta, du) with dphi = M zeta - beta C du + c0, zeta = gamma phi_dot / M
            c0 = r_hist - gamma * (C_un - g_phi)
            rhs_phi = gamma * elastic - (beta * p.K) * elastic_operator(ga, c0, p.eps)
            rhs_u = ru_hist + (beta * gamma) * F_u
            op = PotentialOperator(g, p, beta, a, u_star)
        else:
            rhs_phi = r_hist + gamma * (-C_un + g_phi + p.M * elastic)
            rhs_u = (p.M * ru_hist + (p.M * beta * gamma) * F_u
                     + (beta * gamma) * ops.weighted_grad(a, C_un - g_phi + h_hist))
            op = CoupledOperator(g, p, beta, a, u_star)
        layout = op.layout
        solver = self._coupled_solver(layout)
        rhs = layout.pack(rhs_phi, rhs_u)
        try:
            X, res, its = solver.solve(op, rhs)
        except SolverError as exc:
            raise SolverError(f"{scheme} step {state.step + 1}: {exc}", exc.residual, exc.iterations) from exc
        first, du = layout.unpack(X)
        u_tilde = un + du
        u_eval = un + (beta / gamma) * du
        if self.cfg.formulation == "potential":
            z = p.M * first
            dphi = z - beta * ops.advect_scalar(du, a) + c0
            phi_dot = z / gamma
        else:
            dphi = first
            phi_dot = (dphi - r_hist) / gamma + ops.advect_scalar(u_eval, a) - g_phi
        phi_new = state.phi + dphi
        psi_new = ieq.update_psi(phi_new)
        if scheme == "cn2":
            U_new = ieq.update_U_cn(state.U, phi_new, state.phi, a)
        else:
            U_new = ieq.update_U_bdf(state.U, state.U_prev, phi_new, state.phi, state.phi_prev, a)

        div_tilde = ops.div(u_tilde)
        q, pres, pits = self._pressure.solve(div_tilde, beta)
        u_new = u_tilde - beta * ops.grad(q)
        p_new = state.p + q
        div_new = ops.div(u_new)

        for name, f in (("phi", phi_new), ("U", U_new), ("p", p_new)):
            if not np.isfinite(f.values).all():
                raise SolverError(f"non-finite {name} at step {state.step + 1}")
        if not (np.isfinite(u_new.ux).all() and np.isfinite(u_new.uy).all()):
            raise SolverError(f"non-finite velocity at step {state.step + 1}")

        new = SimState(phi=phi_new, psi=psi_new, U=U_new, u=u_new, p=p_new,
                       phi_prev=state.phi, psi_prev=state.psi, U_prev=state.U, u_prev=state.u,
                       p_prev=state.p, t=state.t + dt, step=state.step + 1, phi_dot=phi_dot,
                       mass0=state.mass0)
        inter = None
        if self.capture:
            inter = StepIntermediates(phi_star=a, u_star=u_star, u_tilde=u_tilde, u_tilde_eval=u_eval,
                                      phi_dot=phi_dot, q=q)
        report = StepReport(scheme=scheme, coupled_iterations=its, coupled_residual=res,
                            pressure_iterations=pits, pressure_residual=pres,
                            phi_dot_norm=norm(phi_dot), div_tilde_norm=norm(div_tilde),
                            div_norm=norm(div_new), wall_time=_time.perf_counter() - t_start,
                            intermediates=inter)
        return new, report


def cn2_step(state: SimState, params: Params, forcing=None, solver: SolverConfig | None = None,
             bc: ops.BcSpec | None = None):
    """Single CN2 step with a throw-away :class:`Stepper`."""
    return Stepper(state.grid, params, solver, bc, forcing, capture=True).cn2_step(state)


def bdf2_step(state: SimState, params: Params, forcing=None, solver: SolverConfig | None = None,
              bc: ops.BcSpec | None = None):
    return Stepper(state.grid, params, solver, bc, forcing, capture=True).bdf2_step(state)


def run(state: SimState, stepper: Stepper, scheme: str, T: float, callback=None,
        stationary_tol: float | None = 1e-8):
    """Step until ``t >= T`` (to rounding) or ``|phi^{n+1} - phi^n| / dt < stationary_tol``.

    ``callback(old, new, report)`` is called after every step; returning
    ``False`` stops the loop. Returns the final state.
    """
    dt = stepper.params.dt
    n_steps = int(round((T - state.t) / dt))
    for _ in range(n_steps):
        new, report = stepper.advance(state, scheme)
        keep_going = True
        if callback is not None:
            keep_going = callback(state, new, report) is not False
        rate = norm(new.phi - state.phi) / dt
        state = new
        if not keep_going:
            break
        if stationary_tol is not None and rate < stationary_tol:
            log.info("stationary at t=%g (rate %.3e)", state.t, rate)
            break
    return state
