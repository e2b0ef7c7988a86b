"""Energy functionals, the per-step energy checks, and the energy log."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

from . import operators as ops
from .fields import inner_face, inner_tensor, integrate, norm
from .ieq import Params, SimState

CSV_COLUMNS = ("step", "time", "E_total", "E_kinetic", "E_elastic", "E_ieq", "E_pressure_aux",
               "E_bdf_history", "E_physical", "dissipation", "identity_residual", "mass")


@dataclass
class EnergyReport:
    step: int
    time: float
    E_total: float
    E_kinetic: float
    E_elastic: float
    E_ieq: float
    E_pressure_aux: float
    E_bdf_history: float
    E_physical: float
    dissipation: float = float("nan")
    identity_residual: float = float("nan")
    mass: float = float("nan")


def _sq(f) -> float:
    return norm(f) ** 2


def _grad_p_sq(p) -> float:
    g = ops.grad(p)
    return inner_face(g, g)


def kinetic(state: SimState) -> float:
    return 0.5 * _sq(state.u)


def physical_energy(state: SimState, params: Params) -> float:
    """Quadratized energy ``1/2|u|^2 + K/2 |psi|^2 + K/(4 eps^2) |U|^2``."""
    return 0.5 * _sq(state.u) + 0.5 * params.K * _sq(state.psi) + params.K / (4 * params.eps**2) * _sq(state.U)


def original_energy(state: SimState, params: Params) -> float:
    """Energy in the original variables, with ``|grad phi|^2 - 1`` in place of ``U``."""
    gphi = ops.grad(state.phi)
    W = ops.grad_product(gphi, gphi) - 1.0
    return (0.5 * _sq(state.u) + 0.5 * params.K * _sq(ops.laplacian(state.phi))
            + params.K / (4 * params.eps**2) * _sq(W))


def magnetic_energy(state: SimState, params: Params) -> float:
    """``-tau |grad phi . h|^2``, zero when the field is off."""
    if params.tau == 0:
        return 0.0
    return -params.tau * _sq(ops.grad_dot_h(ops.grad(state.phi), params.h))


def energy_cn(state: SimState, params: Params) -> float:
    return physical_energy(state, params) + params.dt**2 / 8.0 * _grad_p_sq(state.p)


def energy_bdf(state: SimState, params: Params) -> float:
    """Modified two-level energy; uses ``state`` and its ``*_prev`` level."""
    K, e2, dt = params.K, params.eps**2, params.dt
    u, up = state.u, state.u_prev
    psi, psip = state.psi, state.psi_prev
    U, Up = state.U, state.U_prev
    return (0.25 * (_sq(u) + _sq(2.0 * u - up))
            + 0.25 * K * (_sq(psi) + _sq(2.0 * psi - psip))
            + K / (8.0 * e2) * (_sq(U) + _sq(2.0 * U - Up))
            + dt**2 / 3.0 * _grad_p_sq(state.p))


def energy_report(state: SimState, params: Params, scheme: str) -> EnergyReport:
    K, e2, dt = params.K, params.eps**2, params.dt
    kin = 0.5 * _sq(state.u)
    ela = 0.5 * K * _sq(state.psi)
    ieq_part = K / (4 * e2) * _sq(state.U)
    if scheme == "cn2":
        pres = dt**2 / 8.0 * _grad_p_sq(state.p)
        total = kin + ela + ieq_part + pres
    else:
        pres = dt**2 / 3.0 * _grad_p_sq(state.p)
        total = energy_bdf(state, params)
    hist = total - (kin + ela + ieq_part + pres) if scheme != "cn2" else 0.0
    return EnergyReport(step=state.step, time=state.t, E_total=total, E_kinetic=kin, E_elastic=ela,
                        E_ieq=ieq_part, E_pressure_aux=pres, E_bdf_history=hist,
                        E_physical=kin + ela + ieq_part, mass=integrate(state.phi))


def dissipation(u_eval, phi_star, params: Params) -> float:
    """``(sigma(u, grad phi*), D(u))`` over the tensor samples."""
    Du = ops.deformation(u_eval)
    return inner_tensor(ops.stress(Du, ops.grad(phi_star), params.mu1, params.mu4, params.mu5), Du)


def cn2_identity_residual(old: SimState, new: SimState, inter, params: Params) -> float:
    """Signed sum of the CN2 energy identity in rate form (zero up to solver error).

    ``(1/M)|phi_dot|^2 + (E^{n+1} - E^n)/dt + (sigma(u~^{n+1/2}), D(u~^{n+1/2}))``
    """
    dE = energy_cn(new, params) - energy_cn(old, params)
    return (_sq(inter.phi_dot) / params.M + dE / params.dt
            + dissipation(inter.u_tilde_eval, inter.phi_star, params))


def bdf2_monotonicity_slack(old: SimState, new: SimState, inter, params: Params) -> float:
    """``E^n - E^{n+1} - dt [(1/M)|phi_dot|^2 + (sigma, D)]``; non-negative for exact solves."""
    diss = _sq(inter.phi_dot) / params.M + dissipation(inter.u_tilde_eval, inter.phi_star, params)
    return energy_bdf(old, params) - energy_bdf(new, params) - params.dt * diss


def bdf2_jump_terms(old: SimState, new: SimState, inter, params: Params) -> float:
    """Sum of the non-negative squared jumps dropped in the BDF2 stability proof."""
    K, e2 = params.K, params.eps**2
    ju = new.u - 2.0 * old.u + old.u_prev
    jpsi = new.psi - 2.0 * old.psi + old.psi_prev
    jU = new.U - 2.0 * old.U + old.U_prev
    return (0.75 * _sq(new.u - inter.u_tilde) + 0.25 * _sq(ju)
            + 0.25 * K * _sq(jpsi) + K / (8.0 * e2) * _sq(jU))


class EnergyLog:
    """Writes energy rows to CSV with 17 significant digits."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(CSV_COLUMNS)

    def write(self, rep: EnergyReport) -> None:
        row = [str(rep.step)] + [f"{v:.17g}" for v in astuple(rep)[1:]]
        self._w.writerow(row)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_energy_log(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError("unexpected energy log header")
    return {name: data[:, k] for k, name in enumerate(header)}


assert tuple(f.name for f in fields(EnergyReport)) == CSV_COLUMNS
