"""Uniform MAC grid, staggered field containers and the discrete inner products.

Scalars live at cell centres, velocity components on the faces normal to
them, and the off-diagonal tensor component on grid nodes.  Arrays are
indexed ``[i, j]`` with ``i`` running along x.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GridMismatchError(ValueError):
    pass


class NonFiniteFieldError(FloatingPointError):
    pass


def _check_finite(name: str, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.isfinite(a).all():
            raise NonFiniteFieldError(f"{name} contains NaN or Inf")


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    hx: float = field(init=False)
    hy: float = field(init=False)

    def __post_init__(self):
        if int(self.nx) < 4 or int(self.ny) < 4:
            raise ValueError(f"grid needs at least 4x4 cells, got {self.nx}x{self.ny}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("degenerate domain bounds")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "hx", (self.x_max - self.x_min) / self.nx)
        object.__setattr__(self, "hy", (self.y_max - self.y_min) / self.ny)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    # sample coordinates, all returned as 2D arrays with ij indexing
    def centers(self):
        x = self.x_min + (np.arange(self.nx) + 0.5) * self.hx
        y = self.y_min + (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def xfaces(self):
        x = self.x_min + np.arange(self.nx + 1) * self.hx
        y = self.y_min + (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def yfaces(self):
        x = self.x_min + (np.arange(self.nx) + 0.5) * self.hx
        y = self.y_min + np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def nodes(self):
        x = self.x_min + np.arange(self.nx + 1) * self.hx
        y = self.y_min + np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def xface_weights(self) -> np.ndarray:
        w = np.full((self.nx + 1, self.ny), self.cell_area)
        w[0, :] *= 0.5
        w[-1, :] *= 0.5
        return w

    def yface_weights(self) -> np.ndarray:
        w = np.full((self.nx, self.ny + 1), self.cell_area)
        w[:, 0] *= 0.5
        w[:, -1] *= 0.5
        return w

    def node_weights(self) -> np.ndarray:
        """Trapezoidal node weights; they make ``tensor_div`` the exact adjoint of ``deformation``."""
        w = np.full((self.nx + 1, self.ny + 1), self.cell_area)
        w[0, :] *= 0.5
        w[-1, :] *= 0.5
        w[:, 0] *= 0.5
        w[:, -1] *= 0.5
        return w


def new_grid(nx: int, ny: int, bounds) -> Grid:
    x_min, x_max, y_min, y_max = (float(b) for b in bounds)
    return Grid(nx, ny, x_min, x_max, y_min, y_max)


class ScalarField:
    """Cell-centred scalar, shape ``(nx, ny)``."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values, check: bool = True):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.nx, grid.ny):
            raise ValueError(f"expected shape {(grid.nx, grid.ny)}, got {values.shape}")
        if check:
            _check_finite("ScalarField", values)
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid: Grid) -> ScalarField:
        return cls(grid, np.zeros((grid.nx, grid.ny)), check=False)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> ScalarField:
        return cls(grid, np.full((grid.nx, grid.ny), float(c)))

    @classmethod
    def from_function(cls, grid: Grid, f) -> ScalarField:
        x, y = grid.centers()
        return cls(grid, np.broadcast_to(f(x, y), x.shape).copy())

    def copy(self) -> ScalarField:
        return ScalarField(self.grid, self.values.copy(), check=False)

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatchError("scalar fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other), check=False)

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other), check=False)

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values, check=False)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other), check=False)

    __rmul__ = __mul__

    def __truediv__(self, c: float):
        return ScalarField(self.grid, self.values / c, check=False)

    def __neg__(self):
        return ScalarField(self.grid, -self.values, check=False)

    def __repr__(self):
        return f"ScalarField({self.grid.nx}x{self.grid.ny})"


class FaceVectorField:
    """Face-normal velocity samples: ``ux`` on vertical faces, ``uy`` on horizontal faces."""

    __slots__ = ("grid", "ux", "uy")

    def __init__(self, grid: Grid, ux, uy, check: bool = True):
        ux = np.asarray(ux, dtype=float)
        uy = np.asarray(uy, dtype=float)
        if ux.shape != (grid.nx + 1, grid.ny) or uy.shape != (grid.nx, grid.ny + 1):
            raise ValueError("face array shapes do not match the grid")
        if check:
            _check_finite("FaceVectorField", ux, uy)
        self.grid = grid
        self.ux = ux
        self.uy = uy

    @classmethod
    def zeros(cls, grid: Grid) -> FaceVectorField:
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)), check=False)

    @classmethod
    def from_functions(cls, grid: Grid, fx, fy) -> FaceVectorField:
        xa, ya = grid.xfaces()
        xb, yb = grid.yfaces()
        ux = np.broadcast_to(fx(xa, ya), xa.shape).copy()
        uy = np.broadcast_to(fy(xb, yb), xb.shape).copy()
        return cls(grid, ux, uy)

    def copy(self) -> FaceVectorField:
        return FaceVectorField(self.grid, self.ux.copy(), self.uy.copy(), check=False)

    def with_zero_normal_trace(self) -> FaceVectorField:
        ux = self.ux.copy()
        uy = self.uy.copy()
        ux[0, :] = ux[-1, :] = 0.0
        uy[:, 0] = uy[:, -1] = 0.0
        return FaceVectorField(self.grid, ux, uy, check=False)

    def _other(self, other):
        if isinstance(other, FaceVectorField):
            if other.grid != self.grid:
                raise GridMismatchError("face fields live on different grids")
            return other.ux, other.uy
        return other, other

    def __add__(self, other):
        ox, oy = self._other(other)
        return FaceVectorField(self.grid, self.ux + ox, self.uy + oy, check=False)

    __radd__ = __add__

    def __sub__(self, other):
        ox, oy = self._other(other)
        return FaceVectorField(self.grid, self.ux - ox, self.uy - oy, check=False)

    def __mul__(self, c: float):
        return FaceVectorField(self.grid, self.ux * c, self.uy * c, check=False)

    __rmul__ = __mul__

    def __truediv__(self, c: float):
        return FaceVectorField(self.grid, self.ux / c, self.uy / c, check=False)

    def __neg__(self):
        return FaceVectorField(self.grid, -self.ux, -self.uy, check=False)

    def __repr__(self):
        return f"FaceVectorField({self.grid.nx}x{self.grid.ny})"


class TensorSample:
    """Symmetric 2x2 tensor: diagonal at centres, off-diagonal at nodes."""

    __slots__ = ("grid", "dxx", "dyy", "dxy")

    def __init__(self, grid: Grid, dxx, dyy, dxy, check: bool = True):
        dxx = np.asarray(dxx, dtype=float)
        dyy = np.asarray(dyy, dtype=float)
        dxy = np.asarray(dxy, dtype=float)
        if dxx.shape != (grid.nx, grid.ny) or dyy.shape != (grid.nx, grid.ny):
            raise ValueError("diagonal tensor components must be cell-centred")
        if dxy.shape != (grid.nx + 1, grid.ny + 1):
            raise ValueError("off-diagonal tensor component must be nodal")
        if check:
            _check_finite("TensorSample", dxx, dyy, dxy)
        self.grid = grid
        self.dxx = dxx
        self.dyy = dyy
        self.dxy = dxy

    @classmethod
    def zeros(cls, grid: Grid) -> TensorSample:
        c = np.zeros((grid.nx, grid.ny))
        return cls(grid, c, c.copy(), np.zeros((grid.nx + 1, grid.ny + 1)), check=False)

    def __add__(self, other: TensorSample):
        return TensorSample(self.grid, self.dxx + other.dxx, self.dyy + other.dyy,
                            self.dxy + other.dxy, check=False)

    def __mul__(self, c: float):
        return TensorSample(self.grid, self.dxx * c, self.dyy * c, self.dxy * c, check=False)

    __rmul__ = __mul__


def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


def inner(a: ScalarField, b: ScalarField) -> float:
    """Midpoint-rule L2 inner product of two cell-centred fields."""
    _same_grid(a, b)
    return a.grid.cell_area * float(np.vdot(a.values, b.values))


def inner_face(u: FaceVectorField, v: FaceVectorField) -> float:
    _same_grid(u, v)
    g = u.grid
    return float(np.vdot(g.xface_weights() * u.ux, v.ux) + np.vdot(g.yface_weights() * u.uy, v.uy))


def inner_tensor(s: TensorSample, t: TensorSample) -> float:
    """Discrete ``integral of s : t`` with the off-diagonal counted twice."""
    _same_grid(s, t)
    g = s.grid
    diag = g.cell_area * float(np.vdot(s.dxx, t.dxx) + np.vdot(s.dyy, t.dyy))
    return diag + 2.0 * float(np.vdot(g.node_weights() * s.dxy, t.dxy))


def norm(a) -> float:
    if isinstance(a, ScalarField):
        return np.sqrt(max(inner(a, a), 0.0))
    if isinstance(a, FaceVectorField):
        return np.sqrt(max(inner_face(a, a), 0.0))
    return np.sqrt(max(inner_tensor(a, a), 0.0))


def integrate(a: ScalarField) -> float:
    return a.grid.cell_area * float(a.values.sum())


# --- snapshot files -------------------------------------------------------

_LOCATIONS = ("center", "xface", "yface")


def write_snapshot(path, name: str, grid: Grid, time: float, location: str, values: np.ndarray) -> None:
    if location not in _LOCATIONS:
        raise ValueError(f"unknown location {location!r}")
    values = np.asarray(values, dtype=float)
    header = [
        f"name={name}",
        f"nx={grid.nx}",
        f"ny={grid.ny}",
        "bounds=" + " ".join(f"{b:.17g}" for b in grid.bounds),
        f"time={time:.17g}",
        f"location={location}",
    ]
    body = [f"{v:.17g}" for v in values.ravel(order="C")]
    Path(path).write_text("\n".join(header + body) + "\n")


def read_snapshot(path):
    """Returns ``(name, grid, time, location, values)``; values keep their staggered shape."""
    lines = Path(path).read_text().splitlines()
    meta = {}
    for line in lines[:6]:
        key, _, val = line.partition("=")
        meta[key] = val
    grid = new_grid(int(meta["nx"]), int(meta["ny"]), [float(b) for b in meta["bounds"].split()])
    location = meta["location"]
    shape = {
        "center": (grid.nx, grid.ny),
        "xface": (grid.nx + 1, grid.ny),
        "yface": (grid.nx, grid.ny + 1),
    }[location]
    values = np.array([float(v) for v in lines[6:]]).reshape(shape)
    return meta["name"], grid, float(meta["time"]), location, values
