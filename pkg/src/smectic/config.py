"""Run configuration: strict INI loading, environment overrides and experiment presets.

The file format is ``key = value`` lines under ``[run]``, ``[grid]``,
``[params]``, ``[solver]`` and ``[output]`` sections. Unknown sections and
keys are errors. Any key can be overridden with an environment variable
``SMECTIC_<SECTION>_<KEY>`` (upper case), e.g. ``SMECTIC_PARAMS_DT=0.005``.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .forcing import FORCING_MODES, MANUFACTURED_BOUNDS, SHEAR_BOUNDS
from .ieq import MAGNETIC_CONVENTIONS, Params
from .linsolve import SolverConfig
from .schemes import SCHEMES

EXPERIMENTS = ("manufactured", "refinement", "layer_motion", "shear", "magnetic", "custom")
ENV_PREFIX = "SMECTIC_"

LAYER_BOUNDS = (-1.0, 1.0, -1.0, 1.0)

# domain and output defaults per experiment; snapshot times follow the figures
PRESETS = {
    "manufactured": dict(bounds=MANUFACTURED_BOUNDS, T=1.0, snapshot_times=()),
    "refinement": dict(bounds=MANUFACTURED_BOUNDS, T=1.0, snapshot_times=()),
    "layer_motion": dict(bounds=LAYER_BOUNDS, T=200.0,
                         snapshot_times=(1.0, 10.0, 20.0, 30.0, 50.0, 100.0, 190.0, 200.0)),
    "shear": dict(bounds=SHEAR_BOUNDS, T=200.0,
                  snapshot_times=(1.0, 3.0, 4.0, 6.0, 10.0, 30.0, 100.0, 200.0)),
    "magnetic": dict(bounds=SHEAR_BOUNDS, T=20.0, tau=10.0,
                     snapshot_times=(1.0, 17.0, 18.0, 19.0, 20.0)),
    "custom": dict(bounds=None, T=1.0, snapshot_times=()),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key and line."""


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "smectic_out"
    energy_every: int = 1
    identity_every: int = 1
    snapshot_times: tuple[float, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    scheme: str = "cn2"
    experiment: str = "manufactured"
    nx: int = 128
    ny: int = 128
    bounds: tuple[float, float, float, float] = MANUFACTURED_BOUNDS
    T: float = 1.0
    params: Params = field(default_factory=Params)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    forcing_mode: str = "continuous"
    shear_walls: bool = False
    stationary_tol: float = 1e-8
    reference_dt: float = 1e-6
    phi0: str = ""

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.forcing_mode not in FORCING_MODES:
            raise ConfigError(f"unknown forcing_mode {self.forcing_mode!r}")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if not self.reference_dt > 0:
            raise ConfigError("reference_dt must be positive")
        if self.nx < 4 or self.ny < 4:
            raise ConfigError("nx and ny must be at least 4")
        x0, x1, y0, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise ConfigError(f"degenerate bounds {self.bounds}")
        need = PRESETS[self.experiment]["bounds"]
        if need is not None and tuple(self.bounds) != tuple(need):
            raise ConfigError(f"experiment {self.experiment} requires bounds {need}, got {self.bounds}")
        if self.experiment == "custom" and not self.phi0:
            raise ConfigError("custom experiment needs run.phi0")
        if self.output.energy_every < 1 or self.output.identity_every < 0:
            raise ConfigError("energy_every must be >= 1 and identity_every >= 0")


def _float_tuple(text: str, n: int | None = None) -> tuple[float, ...]:
    parts = [s for s in text.replace(",", " ").split() if s]
    vals = tuple(float(s) for s in parts)
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} numbers, got {len(vals)}")
    return vals


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# (section, key) -> parser; every accepted key is listed here
_PARAMS_KEYS = {"K": float, "eps": float, "M": float, "mu1": float, "mu4": float, "mu5": float,
                "dt": float, "tau": float, "h": lambda s: _float_tuple(s, 2), "magnetic_convention": str}
SCHEMA = {
    "run": {"scheme": str, "experiment": str, "seed": int, "forcing_mode": str, "shear_walls": _bool,
            "stationary_tol": float, "reference_dt": float, "phi0": str},
    "grid": {"nx": int, "ny": int, "bounds": lambda s: _float_tuple(s, 4)},
    "params": dict(_PARAMS_KEYS, T=float),
    "solver": {f.name: f.type if f.type in (int, float, str) else
               {"float": float, "int": int, "str": str}[f.type]
               for f in dataclasses.fields(SolverConfig)},
    "output": {"directory": str, "energy_every": int, "identity_every": int,
               "snapshot_times": _float_tuple},
}
_KEY_CASE = {s: {k.lower(): k for k in keys} for s, keys in SCHEMA.items()}


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    where, section = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif "=" in s and not s.startswith(("#", ";")):
            where[(section, s.split("=", 1)[0].strip().lower())] = lineno
    return where


def _raw_items(text: str, source: str) -> dict[str, dict[str, tuple[str, str]]]:
    """``{section: {key: (value, location)}}`` after strict parsing."""
    cp = configparser.ConfigParser(interpolation=None, strict=True, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    lines = _line_numbers(text)
    out = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        out[sec] = {}
        for key, val in cp.items(sec):
            loc = f"{source}:{lines.get((sec, key), '?')}"
            if key not in _KEY_CASE[sec]:
                raise ConfigError(f"{loc}: unknown key {sec}.{key}")
            out[sec][_KEY_CASE[sec][key]] = (val, loc)
    return out


def _env_items(environ) -> dict[str, dict[str, tuple[str, str]]]:
    out: dict[str, dict[str, tuple[str, str]]] = {}
    for name, val in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        sec, _, key = rest.partition("_")
        if sec not in SCHEMA or key not in _KEY_CASE[sec]:
            raise ConfigError(f"environment variable {name}: unknown key")
        out.setdefault(sec, {})[_KEY_CASE[sec][key]] = (val, f"${name}")
    return out


def build(items: dict[str, dict[str, tuple[str, str]]]) -> RunConfig:
    """Typed :class:`RunConfig` from raw ``(value, location)`` items."""
    typed: dict[str, dict] = {s: {} for s in SCHEMA}
    for sec, entries in items.items():
        for key, (val, loc) in entries.items():
            try:
                typed[sec][key] = SCHEMA[sec][key](val.strip())
            except ValueError as exc:
                raise ConfigError(f"{loc}: bad value for {sec}.{key}: {exc}") from exc

    run = typed["run"]
    experiment = run.get("experiment", "manufactured")
    preset = PRESETS.get(experiment)
    if preset is None:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    prm = dict(typed["params"])
    T = prm.pop("T", preset["T"])
    if "tau" in preset:
        prm.setdefault("tau", preset["tau"])
    if "magnetic_convention" in prm and prm["magnetic_convention"] not in MAGNETIC_CONVENTIONS:
        raise ConfigError(f"unknown magnetic_convention {prm['magnetic_convention']!r}")
    grid = typed["grid"]
    bounds = grid.get("bounds", preset["bounds"])
    if bounds is None:
        raise ConfigError("custom experiment needs grid.bounds")
    out = dict(typed["output"])
    out.setdefault("snapshot_times", preset["snapshot_times"])
    try:
        params = Params(**prm)
        solver = SolverConfig(**typed["solver"])
        output = OutputConfig(**out)
        return RunConfig(nx=grid.get("nx", 128), ny=grid.get("ny", 128), bounds=tuple(bounds), T=T,
                         params=params, solver=solver, output=output, **run)
    except ConfigError as exc:
        raise ConfigError(_locate(str(exc), items)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(_locate(str(exc), items)) from exc


def _locate(msg: str, items) -> str:
    """Prefix ``msg`` with the file location of the key it names, when there is one."""
    words = msg.replace(",", " ").split()
    for sec, entries in items.items():
        for key, (_, loc) in entries.items():
            if key in words[:3] or key.lower() in words[:3]:
                return f"{loc}: {sec}.{key}: {msg}"
    return msg


def load(path=None, text: str | None = None, environ=None) -> RunConfig:
    """Read a config file (or ``text``) and apply ``SMECTIC_*`` overrides from ``environ``."""
    if text is None:
        if path is None:
            text, source = "", "<defaults>"
        else:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            source = str(path)
    else:
        source = "<string>"
    items = _raw_items(text, source)
    for sec, entries in _env_items(os.environ if environ is None else environ).items():
        items.setdefault(sec, {}).update(entries)
    return build(items)
