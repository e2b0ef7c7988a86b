"""Discrete operator algebra on the MAC grid.

Everything is built from one face gradient and its negative adjoint, the
cell divergence, together with adjoint pairs of centre/face averages.  With
the weights of :mod:`smectic.fields` this makes the integration-by-parts
steps of the energy proofs hold to rounding:

* ``inner(div(u), q) == -inner_face(u, grad(q))`` for ``u`` with zero normal trace
* ``inner_face(convect(w, v), v) == 0`` for ``v`` with zero normal trace
* ``inner_face(tensor_div(s), v) == -inner_tensor(s, deformation(v))``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FaceVectorField, Grid, ScalarField, TensorSample, GridMismatchError


@dataclass(frozen=True)
class BcSpec:
    """Tangential wall velocities; normal velocity is zero on every wall.

    Scalars always carry homogeneous Neumann data.
    """

    top: float = 0.0
    bottom: float = 0.0
    left: float = 0.0
    right: float = 0.0

    @property
    def homogeneous(self) -> bool:
        return self.top == self.bottom == self.left == self.right == 0.0


NO_SLIP = BcSpec()


# --- gradient / divergence --------------------------------------------------

def grad(phi: ScalarField, bc: BcSpec | None = None) -> FaceVectorField:
    """Centred difference across each interior face; zero flux on walls."""
    g = phi.grid
    v = phi.values
    gx = np.zeros((g.nx + 1, g.ny))
    gy = np.zeros((g.nx, g.ny + 1))
    gx[1:-1] = (v[1:] - v[:-1]) / g.hx
    gy[:, 1:-1] = (v[:, 1:] - v[:, :-1]) / g.hy
    return FaceVectorField(g, gx, gy, check=False)


def div(u: FaceVectorField) -> ScalarField:
    g = u.grid
    d = (u.ux[1:] - u.ux[:-1]) / g.hx + (u.uy[:, 1:] - u.uy[:, :-1]) / g.hy
    return ScalarField(g, d, check=False)


def laplacian(phi: ScalarField) -> ScalarField:
    return div(grad(phi))


def biharmonic(phi: ScalarField) -> ScalarField:
    # the outer Laplacian's zero wall flux is the discrete d(lap phi)/dn = 0
    return laplacian(laplacian(phi))


# --- centre <-> face transfers ----------------------------------------------

def center_to_faces(s: ScalarField) -> FaceVectorField:
    """Arithmetic mean onto faces; wall faces copy the adjacent cell.

    This is the exact adjoint of :func:`faces_to_centers` under the
    half-weighted wall faces.
    """
    g = s.grid
    v = s.values
    fx = np.empty((g.nx + 1, g.ny))
    fy = np.empty((g.nx, g.ny + 1))
    fx[1:-1] = 0.5 * (v[1:] + v[:-1])
    fx[0] = v[0]
    fx[-1] = v[-1]
    fy[:, 1:-1] = 0.5 * (v[:, 1:] + v[:, :-1])
    fy[:, 0] = v[:, 0]
    fy[:, -1] = v[:, -1]
    return FaceVectorField(g, fx, fy, check=False)


def faces_to_centers(w: FaceVectorField) -> tuple[np.ndarray, np.ndarray]:
    """Average each component over the two faces bounding a cell."""
    return 0.5 * (w.ux[:-1] + w.ux[1:]), 0.5 * (w.uy[:, :-1] + w.uy[:, 1:])


def grad_product(ga: FaceVectorField, w: FaceVectorField) -> ScalarField:
    """Cell-centred ``ga . w``: face products averaged to centres."""
    cx = 0.5 * (ga.ux[:-1] * w.ux[:-1] + ga.ux[1:] * w.ux[1:])
    cy = 0.5 * (ga.uy[:, :-1] * w.uy[:, :-1] + ga.uy[:, 1:] * w.uy[:, 1:])
    return ScalarField(ga.grid, cx + cy, check=False)


def grad_product_adjoint(ga: FaceVectorField, s: ScalarField) -> FaceVectorField:
    """Adjoint of ``w -> grad_product(ga, w)``: the face field ``s * ga``."""
    f = center_to_faces(s)
    return FaceVectorField(ga.grid, f.ux * ga.ux, f.uy * ga.uy, check=False)


# --- transport --------------------------------------------------------------

def advect_scalar(u: FaceVectorField, phi: ScalarField) -> ScalarField:
    """``div(u phi)`` with ``phi`` averaged onto faces."""
    f = center_to_faces(phi)
    return div(FaceVectorField(u.grid, u.ux * f.ux, u.uy * f.uy, check=False))


def weighted_grad(phi: ScalarField, chi: ScalarField) -> FaceVectorField:
    """Face field ``phi grad(chi)``; minus the adjoint of ``u -> advect_scalar(u, phi)``."""
    f = center_to_faces(phi)
    gc = grad(chi)
    return FaceVectorField(phi.grid, f.ux * gc.ux, f.uy * gc.uy, check=False)


def convect(w: FaceVectorField, v: FaceVectorField) -> FaceVectorField:
    """Skew-symmetric ``(w . grad) v + 1/2 div(w) v`` on the staggered control volumes.

    Each momentum control volume exchanges ``flux * v_neighbour / 2`` with its
    neighbours, so the stencil matrix is antisymmetric and
    ``inner_face(convect(w, v), v)`` vanishes for ``v`` with zero wall trace.
    Wall-tangential ghosts are multiplied by the (zero) wall-normal flux and
    are therefore never needed.
    """
    g = w.grid
    if v.grid != g:
        raise GridMismatchError("convect operands live on different grids")
    hx, hy = g.hx, g.hy
    bx = np.zeros((g.nx + 1, g.ny))
    by = np.zeros((g.nx, g.ny + 1))

    # x-momentum on interior vertical faces
    fc = 0.5 * (w.ux[:-1] + w.ux[1:])                    # x-flux at cell centres
    bx[1:-1] = (fc[1:] * v.ux[2:] - fc[:-1] * v.ux[:-2]) / (2 * hx)
    fn = 0.5 * (w.uy[:-1, :] + w.uy[1:, :])              # y-flux at nodes, interior columns
    vp = np.zeros((g.nx - 1, g.ny + 2))
    vp[:, 1:-1] = v.ux[1:-1]
    bx[1:-1] += (fn[:, 1:] * vp[:, 2:] - fn[:, :-1] * vp[:, :-2]) / (2 * hy)

    # y-momentum on interior horizontal faces
    fc = 0.5 * (w.uy[:, :-1] + w.uy[:, 1:])
    by[:, 1:-1] = (fc[:, 1:] * v.uy[:, 2:] - fc[:, :-1] * v.uy[:, :-2]) / (2 * hy)
    fn = 0.5 * (w.ux[:, :-1] + w.ux[:, 1:])              # x-flux at nodes, interior rows
    vp = np.zeros((g.nx + 2, g.ny - 1))
    vp[1:-1, :] = v.uy[:, 1:-1]
    by[:, 1:-1] += (fn[1:, :] * vp[2:, :] - fn[:-1, :] * vp[:-2, :]) / (2 * hx)
    return FaceVectorField(g, bx, by, check=False)


# --- deformation and stress -------------------------------------------------

def deformation(u: FaceVectorField, bc: BcSpec | None = None) -> TensorSample:
    """``D(u) = (grad u + grad u^T)/2``; wall-tangential ghosts reflect about ``bc``.

    With ``bc=None`` the walls are treated as no-slip, which makes the map linear.
    """
    bc = bc or NO_SLIP
    g = u.grid
    hx, hy = g.hx, g.hy
    dxx = (u.ux[1:] - u.ux[:-1]) / hx
    dyy = (u.uy[:, 1:] - u.uy[:, :-1]) / hy

    dudy = np.empty((g.nx + 1, g.ny + 1))
    dudy[:, 1:-1] = (u.ux[:, 1:] - u.ux[:, :-1]) / hy
    dudy[:, 0] = 2.0 * (u.ux[:, 0] - bc.bottom) / hy
    dudy[:, -1] = 2.0 * (bc.top - u.ux[:, -1]) / hy

    dvdx = np.empty((g.nx + 1, g.ny + 1))
    dvdx[1:-1, :] = (u.uy[1:, :] - u.uy[:-1, :]) / hx
    dvdx[0, :] = 2.0 * (u.uy[0, :] - bc.left) / hx
    dvdx[-1, :] = 2.0 * (bc.right - u.uy[-1, :]) / hx

    return TensorSample(g, dxx, dyy, 0.5 * (dudy + dvdx), check=False)


def tensor_div(sigma: TensorSample) -> FaceVectorField:
    """Row divergence of a symmetric tensor, on interior faces only.

    Exactly ``-deformation^*`` under the centre/trapezoid-node tensor weights.
    """
    g = sigma.grid
    fx = np.zeros((g.nx + 1, g.ny))
    fy = np.zeros((g.nx, g.ny + 1))
    fx[1:-1] = (sigma.dxx[1:] - sigma.dxx[:-1]) / g.hx \
        + (sigma.dxy[1:-1, 1:] - sigma.dxy[1:-1, :-1]) / g.hy
    fy[:, 1:-1] = (sigma.dxy[1:, 1:-1] - sigma.dxy[:-1, 1:-1]) / g.hx \
        + (sigma.dyy[:, 1:] - sigma.dyy[:, :-1]) / g.hy
    return FaceVectorField(g, fx, fy, check=False)


def _nodes_to_centers(a: np.ndarray) -> np.ndarray:
    return 0.25 * (a[:-1, :-1] + a[1:, :-1] + a[:-1, 1:] + a[1:, 1:])


def _centers_to_nodes_adjoint(grid: Grid, c: np.ndarray) -> np.ndarray:
    # adjoint of _nodes_to_centers under (cell_area, node_weights)
    s = np.zeros((grid.nx + 1, grid.ny + 1))
    s[:-1, :-1] += c
    s[1:, :-1] += c
    s[:-1, 1:] += c
    s[1:, 1:] += c
    return s * (grid.cell_area / (4.0 * grid.node_weights()))


def stress(Du: TensorSample, gphi: FaceVectorField, mu1: float, mu4: float, mu5: float) -> TensorSample:
    """Dissipative stress ``mu1 (g.Dg) g(x)g + mu4 D + mu5 (Dg(x)g + g(x)Dg)`` with ``g = grad phi``.

    The anisotropic part is evaluated with every component collocated at cell
    centres and mapped back to the staggered samples by the adjoint of that
    collocation, so ``inner_tensor(stress(D), D)`` equals
    ``mu4 |D|^2 + mu1 |g.Dg|^2 + 2 mu5 |Dg|^2`` summed at centres.
    """
    if min(mu1, mu4, mu5) < 0:
        raise ValueError("stress coefficients must be non-negative")
    g = Du.grid
    out = Du * mu4
    if mu1 == 0.0 and mu5 == 0.0:
        return out
    gx, gy = faces_to_centers(gphi)
    dxy = _nodes_to_centers(Du.dxy)
    dxx, dyy = Du.dxx, Du.dyy
    s = gx * gx * dxx + 2.0 * gx * gy * dxy + gy * gy * dyy
    dgx = dxx * gx + dxy * gy
    dgy = dxy * gx + dyy * gy
    sxx = mu1 * s * gx * gx + 2.0 * mu5 * dgx * gx
    syy = mu1 * s * gy * gy + 2.0 * mu5 * dgy * gy
    sxy = mu1 * s * gx * gy + mu5 * (dgx * gy + gx * dgy)
    return out + TensorSample(g, sxx, syy, _centers_to_nodes_adjoint(g, sxy), check=False)


def dissipation_density_terms(Du: TensorSample, gphi: FaceVectorField):
    """``(|g.Dg|^2, |D|^2, |Dg|^2)`` integrated with the weights used by :func:`stress`."""
    from .fields import inner_tensor

    gx, gy = faces_to_centers(gphi)
    dxy = _nodes_to_centers(Du.dxy)
    s = gx * gx * Du.dxx + 2.0 * gx * gy * dxy + gy * gy * Du.dyy
    dgx = Du.dxx * gx + dxy * gy
    dgy = dxy * gx + Du.dyy * gy
    a = Du.grid.cell_area
    return a * float(np.sum(s * s)), inner_tensor(Du, Du), a * float(np.sum(dgx * dgx + dgy * dgy))


# --- magnetic field term ----------------------------------------------------

def _unit(h) -> tuple[float, float]:
    hx, hy = float(h[0]), float(h[1])
    if abs(np.hypot(hx, hy) - 1.0) > 1e-12:
        raise ValueError(f"magnetic direction must be a unit vector, got {h}")
    return hx, hy


def grad_dot_h(gphi: FaceVectorField, h) -> ScalarField:
    hx, hy = _unit(h)
    cx, cy = faces_to_centers(gphi)
    return ScalarField(gphi.grid, hx * cx + hy * cy, check=False)


def magnetic_div(s: ScalarField, h) -> ScalarField:
    """``div(s h)`` with zero wall flux; adjoint-paired with :func:`grad_dot_h` so that
    ``inner(magnetic_div(grad_dot_h(grad(phi), h), h), phi) == -|grad_dot_h|^2``."""
    hx, hy = _unit(h)
    f = center_to_faces(s)
    fx = hx * f.ux
    fy = hy * f.uy
    fx[0] = fx[-1] = 0.0
    fy[:, 0] = fy[:, -1] = 0.0
    return div(FaceVectorField(s.grid, fx, fy, check=False))


# --- dense assembly (test oracle only) -------------------------------------

def assemble_dense(apply, n_in: int) -> np.ndarray:
    """Column-by-column matrix of a linear map on flat vectors.  Small grids only."""
    cols = []
    e = np.zeros(n_in)
    for k in range(n_in):
        e[k] = 1.0
        cols.append(np.asarray(apply(e), dtype=float).ravel())
        e[k] = 0.0
    return np.column_stack(cols)
