import pytest

from smectic.config import EXPERIMENTS, LAYER_BOUNDS, ConfigError, load
from smectic.forcing import MANUFACTURED_BOUNDS, SHEAR_BOUNDS
from smectic.ieq import Params


def test_defaults_reproduce_default_parameters():
    cfg = load(text="", environ={})
    assert cfg.params == Params()
    assert (cfg.nx, cfg.ny) == (128, 128)
    assert cfg.bounds == MANUFACTURED_BOUNDS and cfg.scheme == "cn2"


def test_presets():
    expect = {"manufactured": MANUFACTURED_BOUNDS, "refinement": MANUFACTURED_BOUNDS,
              "layer_motion": LAYER_BOUNDS, "shear": SHEAR_BOUNDS, "magnetic": SHEAR_BOUNDS}
    for name, bounds in expect.items():
        assert load(text=f"[run]\nexperiment = {name}\n", environ={}).bounds == bounds
    lm = load(text="[run]\nexperiment = layer_motion\n", environ={})
    assert lm.output.snapshot_times == (1, 10, 20, 30, 50, 100, 190, 200) and lm.T == 200
    sh = load(text="[run]\nexperiment = shear\n", environ={})
    assert sh.output.snapshot_times == (1, 3, 4, 6, 10, 30, 100, 200)
    mg = load(text="[run]\nexperiment = magnetic\n", environ={})
    assert mg.params.tau == 10.0 and not mg.shear_walls
    assert set(EXPERIMENTS) == set(expect) | {"custom"}


def test_full_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("""
[run]
scheme = bdf2
experiment = layer_motion   # inline comment
[grid]
nx = 16
ny = 12
[params]
dt = 0.005
T = 2
mu1 = 0.1
h = 0, 1
magnetic_convention = paper_literal
[solver]
rtol = 1e-10
preconditioner = diagonal
[output]
directory = out
energy_every = 5
snapshot_times = 0.5, 1
""")
    cfg = load(path, environ={})
    assert cfg.scheme == "bdf2" and (cfg.nx, cfg.ny) == (16, 12)
    assert cfg.params.dt == 0.005 and cfg.T == 2.0 and cfg.params.h == (0.0, 1.0)
    assert cfg.solver.rtol == 1e-10 and cfg.solver.preconditioner == "diagonal"
    assert cfg.output.energy_every == 5 and cfg.output.snapshot_times == (0.5, 1.0)


@pytest.mark.parametrize("text, where", [
    ("[run]\nschem = cn2\n", ":2"),
    ("[params]\n\ndt = -1\n", ":3"),
    ("[solver]\nrtol = abc\n", ":2"),
    ("[bogus]\nx = 1\n", "bogus"),
    ("[run]\nscheme = cn3\n", ":2"),
])
def test_errors_name_line_and_key(tmp_path, text, where):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError) as exc:
        load(path, environ={})
    assert where in str(exc.value)


def test_domain_enforced():
    with pytest.raises(ConfigError):
        load(text="[run]\nexperiment = shear\n[grid]\nbounds = 0 1 0 1\n", environ={})
    with pytest.raises(ConfigError):
        load(text="[run]\nexperiment = custom\n", environ={})


def test_environment_override():
    cfg = load(text="[params]\ndt = 0.01\n", environ={"SMECTIC_PARAMS_DT": "0.002", "SMECTIC_SOLVER_MAXITER": "9",
                                                     "OTHER": "x"})
    assert cfg.params.dt == 0.002 and cfg.solver.maxiter == 9
    with pytest.raises(ConfigError):
        load(text="", environ={"SMECTIC_PARAMS_DTT": "1"})


def test_positive_T_and_dt():
    with pytest.raises(ConfigError):
        load(text="[params]\nT = 0\n", environ={})
    with pytest.raises(ConfigError):
        load(text="[params]\ndt = 0\n", environ={})
