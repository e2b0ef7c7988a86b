"""Command line entry point: ``smectic run | convergence | check``.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 property failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import sympy as sp

from . import energy as en
from . import operators as ops
from .checks import CORRUPTIONS, run_checks
from .config import ConfigError, RunConfig, load
from .fields import (FaceVectorField, NonFiniteFieldError, ScalarField, inner, inner_face, integrate, new_grid,
                     write_snapshot)
from .forcing import ExactSolution, shear_bc
from .linsolve import SolverError
from .schemes import Stepper, bootstrap, run as run_steps

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY = 0, 1, 2, 3


# --- experiments ----------------------------------------------------------------

@dataclass
class Experiment:
    state: object
    bc: ops.BcSpec
    forcing: object
    exact: ExactSolution | None

    @property
    def homogeneous(self) -> bool:
        return self.bc == ops.NO_SLIP and self.forcing is None


def _phi_from_expression(grid, text: str) -> ScalarField:
    x, y = sp.symbols("x y")
    try:
        expr = sp.sympify(text, locals={"x": x, "y": y})
    except (sp.SympifyError, TypeError) as exc:
        raise ConfigError(f"run.phi0: cannot parse {text!r}: {exc}") from exc
    if expr.free_symbols - {x, y}:
        raise ConfigError(f"run.phi0 may only use x and y, got {sorted(map(str, expr.free_symbols))}")
    fn = sp.lambdify((x, y), expr, "numpy")
    xc, yc = grid.centers()
    return ScalarField(grid, np.broadcast_to(fn(xc, yc), xc.shape).astype(float))


def setup(cfg: RunConfig, params=None) -> Experiment:
    """Initial state, wall data and forcing of the configured experiment."""
    prm = params or cfg.params
    g = new_grid(cfg.nx, cfg.ny, cfg.bounds)
    xc, yc = g.centers()
    exp = cfg.experiment
    if exp in ("manufactured", "refinement"):
        exact = ExactSolution(prm)
        forcing = exact.forcing(g, cfg.forcing_mode)
        if exp == "manufactured":
            phi0, u0, p0 = exact.exact_fields(g, 0.0, mode=cfg.forcing_mode)
            state = bootstrap(phi0, u0, p0, project=False)
        else:
            state = bootstrap(ScalarField.constant(g, 2.0))
        return Experiment(state, ops.NO_SLIP, forcing, exact)
    if exp == "layer_motion":
        phi0 = ScalarField(g, np.sin(xc) * np.cos(yc) ** 2)
        return Experiment(bootstrap(phi0), ops.NO_SLIP, None, None)
    if exp in ("shear", "magnetic"):
        phi0 = ScalarField(g, yc.copy())
        xa, ya = g.xfaces()
        u0 = FaceVectorField(g, 0.4 * ya, np.zeros((g.nx, g.ny + 1)))
        walls = exp == "shear" or cfg.shear_walls
        bc = shear_bc(grid=g) if walls else ops.NO_SLIP
        return Experiment(bootstrap(phi0, u0), bc, None, None)
    return Experiment(bootstrap(_phi_from_expression(g, cfg.phi0)), ops.NO_SLIP, None, None)


# --- run ------------------------------------------------------------------------

def _snapshot(outdir: Path, state, t_label: float) -> None:
    g = state.grid
    tag = f"t{t_label:g}"
    write_snapshot(outdir / f"phi_{tag}.txt", "phi", g, state.t, "center", state.phi.values)
    write_snapshot(outdir / f"ux_{tag}.txt", "ux", g, state.t, "xface", state.u.ux)
    write_snapshot(outdir / f"uy_{tag}.txt", "uy", g, state.t, "yface", state.u.uy)
    write_snapshot(outdir / f"p_{tag}.txt", "p", g, state.t, "center", state.p.values)


def _step_rows(old, new, report, scheme, prm, exp: Experiment, check_identity: bool) -> en.EnergyReport:
    """Energy row of the run's scheme; the identity column follows the scheme of this step."""
    rep = en.energy_report(new, prm, scheme)
    inter = report.intermediates
    rep.dissipation = (inner(inter.phi_dot, inter.phi_dot) / prm.M
                       + en.dissipation(inter.u_tilde_eval, inter.phi_star, prm))
    if check_identity and exp.homogeneous and prm.tau == 0:
        if report.scheme == "cn2":
            rep.identity_residual = en.cn2_identity_residual(old, new, inter, prm)
        else:
            # BDF2: slack minus the dropped jump terms, zero up to solver error
            rep.identity_residual = (en.bdf2_monotonicity_slack(old, new, inter, prm)
                                     - en.bdf2_jump_terms(old, new, inter, prm)) / prm.dt
    return rep


def simulate(cfg: RunConfig, outdir: Path | None = None, callback=None):
    """Run the configured experiment to ``T``; writes artifacts when ``outdir`` is given.

    ``callback(old, new, report, energy_row)`` sees every step. Returns the final state.
    """
    prm = cfg.params
    exp = setup(cfg)
    stepper = Stepper(exp.state.grid, prm, cfg.solver, exp.bc, exp.forcing, capture=True)
    pending = sorted(cfg.output.snapshot_times)
    log_fh = None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "snapshots").mkdir(exist_ok=True)
        log_fh = en.EnergyLog(outdir / "energy.csv")
        log_fh.write(en.energy_report(exp.state, prm, cfg.scheme))
        if pending and pending[0] <= 0.5 * prm.dt:
            _snapshot(outdir / "snapshots", exp.state, pending.pop(0))
    every_id = cfg.output.identity_every

    def on_step(old, new, report):
        check = every_id > 0 and new.step % every_id == 0
        row = _step_rows(old, new, report, cfg.scheme, prm, exp, check)
        if log_fh is not None:
            if new.step % cfg.output.energy_every == 0:
                log_fh.write(row)
            while pending and new.t >= pending[0] - 0.5 * prm.dt:
                _snapshot(outdir / "snapshots", new, pending.pop(0))
        if callback is not None:
            return callback(old, new, report, row)
        return True

    try:
        final = run_steps(exp.state, stepper, cfg.scheme, cfg.T, on_step, cfg.stationary_tol)
    finally:
        if log_fh is not None:
            log_fh.close()
    return final


def cmd_run(cfg: RunConfig) -> int:
    outdir = Path(cfg.output.directory)
    t0 = time.perf_counter()
    final = simulate(cfg, outdir)
    print(f"{cfg.experiment} {cfg.scheme}: reached t={final.t:.6g} in {final.step} steps "
          f"({time.perf_counter() - t0:.1f} s); mass drift {integrate(final.phi) - final.mass0:.3e}")
    print(f"energy log: {outdir / 'energy.csv'}")
    return EXIT_OK


# --- convergence ----------------------------------------------------------------

CONVERGENCE_COLUMNS = ("dt", "steps", "err_u", "err_v", "err_phi", "err_p",
                       "order_u", "order_v", "order_phi", "order_p", "wall_time")


def parse_dts(text: str) -> list[float]:
    try:
        dts = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"--dts: {exc}") from exc
    validate_dts(dts)
    return dts


def validate_dts(dts) -> None:
    """At least three time steps, each half the previous one."""
    if len(dts) < 3:
        raise ConfigError("convergence needs at least three time steps")
    for a, b in zip(dts, dts[1:]):
        if not (b > 0 and abs(a / b - 2.0) <= 1e-9):
            raise ConfigError(f"time steps must halve: {a} -> {b}")


def _steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * T:
        raise ConfigError(f"T={T} is not a multiple of dt={dt}")
    return n


def _errors(state, ref_phi, ref_u, ref_p) -> tuple[float, float, float, float]:
    g = state.grid
    du = state.u - ref_u
    ex = FaceVectorField(g, du.ux, np.zeros_like(du.uy), check=False)
    ey = FaceVectorField(g, np.zeros_like(du.ux), du.uy, check=False)
    dphi = state.phi - ref_phi
    dp = state.p - ref_p
    dp = dp - integrate(dp) / g.area  # pressure is fixed only up to a constant
    return (np.sqrt(inner_face(ex, ex)), np.sqrt(inner_face(ey, ey)), np.sqrt(inner(dphi, dphi)),
            np.sqrt(inner(dp, dp)))


def _check_convergence_request(cfg: RunConfig, dts, mode: str) -> None:
    validate_dts(dts)
    if mode not in ("exact", "self"):
        raise ConfigError(f"unknown convergence mode {mode!r}")
    if mode == "exact" and cfg.experiment != "manufactured":
        raise ConfigError("exact mode needs the manufactured experiment")
    for dt in dts:
        _steps(cfg.T, dt)
    if mode == "self":
        if cfg.reference_dt >= min(dts):
            raise ConfigError("reference_dt must be smaller than every convergence time step")
        _steps(cfg.T, cfg.reference_dt)


def reference_solution(cfg: RunConfig, mode: str):
    """``(phi, u, p)`` at ``T``: the manufactured fields or a CN2 run at ``cfg.reference_dt``."""
    if mode == "exact":
        g = new_grid(cfg.nx, cfg.ny, cfg.bounds)
        return ExactSolution(cfg.params).exact_fields(g, cfg.T, mode=cfg.forcing_mode)
    ref_cfg = dataclasses.replace(cfg, scheme="cn2", stationary_tol=None,
                                  params=cfg.params.replace(dt=cfg.reference_dt))
    ref_state = simulate(ref_cfg)
    return ref_state.phi, ref_state.u, ref_state.p


def convergence(cfg: RunConfig, dts, mode: str, out_path: Path | None = None, reference=None) -> list[dict]:
    """Errors at ``T`` for each time step and observed orders ``log2(e_{2dt}/e_dt)``.

    ``mode="exact"`` compares with the manufactured solution; ``mode="self"``
    compares with a CN2 run at ``cfg.reference_dt`` on the same grid. A
    precomputed ``reference`` from :func:`reference_solution` may be passed in.
    """
    _check_convergence_request(cfg, dts, mode)
    base = dataclasses.replace(cfg, stationary_tol=None)
    if reference is None:
        reference = reference_solution(cfg, mode)

    rows = []
    for dt in dts:
        run_cfg = dataclasses.replace(base, params=cfg.params.replace(dt=dt))
        t0 = time.perf_counter()
        final = simulate(run_cfg)
        errs = _errors(final, *reference)
        row = dict(dt=dt, steps=final.step, err_u=errs[0], err_v=errs[1], err_phi=errs[2], err_p=errs[3],
                   wall_time=time.perf_counter() - t0)
        for k, name in enumerate(("u", "v", "phi", "p")):
            prev = rows[-1][f"err_{name}"] if rows else None
            row[f"order_{name}"] = (np.log2(prev / errs[k]) if prev and errs[k] > 0 else float("nan"))
        rows.append(row)
        log.info("dt=%g errors %s", dt, errs)
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CONVERGENCE_COLUMNS)
            for r in rows:
                w.writerow([r["steps"] if c == "steps" else f"{r[c]:.17g}" for c in CONVERGENCE_COLUMNS])
    return rows


def cmd_convergence(cfg: RunConfig, dts_text: str, mode: str) -> int:
    dts = parse_dts(dts_text)
    path = Path(cfg.output.directory) / f"convergence_{cfg.scheme}_{mode}.csv"
    rows = convergence(cfg, dts, mode, path)
    print(f"{'dt':>10s} {'err_u':>10s} {'err_v':>10s} {'err_phi':>10s} {'err_p':>10s}  orders u v phi p")
    for r in rows:
        print(f"{r['dt']:10.3e} {r['err_u']:10.3e} {r['err_v']:10.3e} {r['err_phi']:10.3e} {r['err_p']:10.3e}"
              f"  {r['order_u']:6.3f} {r['order_v']:6.3f} {r['order_phi']:6.3f} {r['order_p']:6.3f}")
    print(f"table: {path}")
    return EXIT_OK


# --- check ----------------------------------------------------------------------

def cmd_check(seed: int, nx: int, ny: int, corrupt: str | None) -> int:
    try:
        results = run_checks(seed=seed, nx=nx, ny=ny, corrupt=corrupt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    return EXIT_PROPERTY if failed else EXIT_OK


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smectic", description="Smectic-A liquid crystal flow simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True, help="INI config file")
    c = sub.add_parser("convergence", help="temporal convergence table")
    c.add_argument("--config", required=True, help="INI config file")
    c.add_argument("--dts", required=True, help="comma separated time steps, each halving the previous")
    c.add_argument("--mode", choices=("exact", "self"), required=True)
    k = sub.add_parser("check", help="operator and solver property suite")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--nx", type=int, default=8)
    k.add_argument("--ny", type=int, default=8)
    k.add_argument("--corrupt", choices=CORRUPTIONS, default=None, help=argparse.SUPPRESS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "check":
            return cmd_check(args.seed, args.nx, args.ny, args.corrupt)
        cfg = load(args.config)
        if args.command == "run":
            return cmd_run(cfg)
        return cmd_convergence(cfg, args.dts, args.mode)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NonFiniteFieldError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
