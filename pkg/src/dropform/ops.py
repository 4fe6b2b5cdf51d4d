"""Axisymmetric finite-volume operators on the cell-centred grid.

Boundary conditions enter through one layer of ghost cells. A ghost value is
an affine function of the adjacent interior value: 2g - f for a Dirichlet
face carrying g, f for a Neumann face. Every operator below is a sparse
matrix acting on the ghost-extended array, so the same objects serve the
explicit evaluations and the implicit assemblies.

Extended index: e(I, J) = I * (n_r + 2) + J, interior cell (i, j) sits at
(I, J) = (i + 1, j + 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .domain import Grid, InletData, Params


@dataclass(frozen=True)
class SideBC:
    kind: str            # "D" (Dirichlet) or "N" (Neumann)
    value: object = 0.0  # scalar or array along the side

    def __post_init__(self):
        if self.kind not in ("D", "N"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")


NEUMANN = SideBC("N")
ZERO = SideBC("D", 0.0)


@dataclass(frozen=True)
class FieldBC:
    inlet: SideBC = NEUMANN
    outlet: SideBC = NEUMANN
    axis: SideBC = NEUMANN
    wall: SideBC = NEUMANN

    def kinds(self) -> tuple[str, str, str, str]:
        return (self.inlet.kind, self.outlet.kind, self.axis.kind, self.wall.kind)

    def homogeneous(self) -> "FieldBC":
        z = lambda s: SideBC(s.kind, 0.0)
        return FieldBC(z(self.inlet), z(self.outlet), z(self.axis), z(self.wall))


ALL_NEUMANN = FieldBC()


# boundary condition sets used by the scheme

def phase_bc(inlet: InletData) -> FieldBC:
    return FieldBC(inlet=SideBC("D", inlet.phi))


def potential_bc() -> FieldBC:
    return FieldBC(inlet=ZERO)


def axial_velocity_bc(inlet: InletData) -> FieldBC:
    return FieldBC(inlet=SideBC("D", inlet.vz), outlet=NEUMANN, axis=NEUMANN, wall=ZERO)


AXIAL_VELOCITY_KINDS = FieldBC(inlet=ZERO, outlet=NEUMANN, axis=NEUMANN, wall=ZERO)


def radial_velocity_bc() -> FieldBC:
    return FieldBC(inlet=ZERO, outlet=ZERO, axis=ZERO, wall=ZERO)


def pressure_bc() -> FieldBC:
    return FieldBC(outlet=ZERO)


def _ext1d(n: int, lo: str, hi: str) -> sp.csr_matrix:
    rows = [0] + list(range(1, n + 1)) + [n + 1]
    cols = [0] + list(range(n)) + [n - 1]
    vals = [-1.0 if lo == "D" else 1.0] + [1.0] * n + [-1.0 if hi == "D" else 1.0]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 2, n))


def _side_values(value, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), (n,)).astype(float)


@lru_cache(maxsize=64)
def _ghost_matrix(n_z: int, n_r: int, kinds: tuple[str, str, str, str]) -> sp.csr_matrix:
    inlet, outlet, axis, wall = kinds
    Rz = sp.kron(_ext1d(n_z, inlet, outlet), sp.identity(n_r), format="csr")
    Rr = sp.kron(sp.identity(n_z + 2), _ext1d(n_r, axis, wall), format="csr")
    return (Rr @ Rz).tocsr()


def ghost_operator(grid: Grid, bc: FieldBC) -> tuple[sp.csr_matrix, np.ndarray]:
    """Return (E, b) with extended = E @ f.ravel() + b."""
    n_z, n_r = grid.shape
    E = _ghost_matrix(n_z, n_r, bc.kinds())
    off = np.zeros((n_z + 2, n_r + 2))
    if bc.inlet.kind == "D":
        off[0, 1:-1] = 2.0 * _side_values(bc.inlet.value, n_r)
    if bc.outlet.kind == "D":
        off[-1, 1:-1] = 2.0 * _side_values(bc.outlet.value, n_r)
    # corner ghosts reflect the z-ghost row across the radial sides
    for col, inner, side in ((0, 1, bc.axis), (-1, -2, bc.wall)):
        sign = -1.0 if side.kind == "D" else 1.0
        off[[0, -1], col] = sign * off[[0, -1], inner]
        if side.kind == "D":
            v = _side_values(side.value, n_z)
            off[1:-1, col] += 2.0 * v
            off[0, col] += 2.0 * v[0]
            off[-1, col] += 2.0 * v[-1]
    return E, off.ravel()


def extend(f: np.ndarray, grid: Grid, bc: FieldBC) -> np.ndarray:
    E, b = ghost_operator(grid, bc)
    return E @ np.asarray(f, dtype=float).ravel() + b


class Stencils:
    """Sparse difference, averaging and divergence matrices for one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        nz, nr = grid.shape
        dz, dr = grid.dz, grid.dr
        W = nr + 2
        self.n_ext = (nz + 2) * W
        e = lambda I, J: I * W + J

        i, j = np.meshgrid(np.arange(nz), np.arange(nr), indexing="ij")
        i, j = i.ravel(), j.ravel()
        cell = np.arange(nz * nr)

        def mat(rows, cols, vals, nrows):
            return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(nrows, self.n_ext))

        h = 1.0 / (2 * dz)
        self.cgrad_z = mat([cell, cell], [e(i + 2, j + 1), e(i, j + 1)],
                           [np.full(cell.size, h), np.full(cell.size, -h)], cell.size)
        h = 1.0 / (2 * dr)
        self.cgrad_r = mat([cell, cell], [e(i + 1, j + 2), e(i + 1, j)],
                           [np.full(cell.size, h), np.full(cell.size, -h)], cell.size)
        self.interior = mat([cell], [e(i + 1, j + 1)], [np.ones(cell.size)], cell.size)

        # z-faces: i = 0..nz (left of cell i), j = 0..nr-1
        fi, fj = np.meshgrid(np.arange(nz + 1), np.arange(nr), indexing="ij")
        fi, fj = fi.ravel(), fj.ravel()
        nzf = fi.size
        fid = np.arange(nzf)
        self.zf_i, self.zf_j = fi, fj
        self.zf_r = grid.r[fj]
        self.zf_boundary = (fi == 0) | (fi == nz)
        self.zf_weight = np.where(self.zf_boundary, 0.5, 1.0) * grid.area
        self.dz_face = mat([fid, fid], [e(fi + 1, fj + 1), e(fi, fj + 1)],
                           [np.full(nzf, 1 / dz), np.full(nzf, -1 / dz)], nzf)
        self.avg_zf = mat([fid, fid], [e(fi + 1, fj + 1), e(fi, fj + 1)],
                          [np.full(nzf, 0.5), np.full(nzf, 0.5)], nzf)

        # r-faces: i = 0..nz-1, j = 0..nr (below cell j)
        gi, gj = np.meshgrid(np.arange(nz), np.arange(nr + 1), indexing="ij")
        gi, gj = gi.ravel(), gj.ravel()
        nrf = gi.size
        gid = np.arange(nrf)
        self.rf_i, self.rf_j = gi, gj
        self.rf_r = gj * dr
        self.rf_boundary = (gj == 0) | (gj == nr)
        self.rf_weight = np.where(self.rf_boundary, 0.5, 1.0) * grid.area
        self.dr_face = mat([gid, gid], [e(gi + 1, gj + 1), e(gi + 1, gj)],
                           [np.full(nrf, 1 / dr), np.full(nrf, -1 / dr)], nrf)
        self.avg_rf = mat([gid, gid], [e(gi + 1, gj + 1), e(gi + 1, gj)],
                          [np.full(nrf, 0.5), np.full(nrf, 0.5)], nrf)

        # vertices: i = 0..nz, j = 0..nr
        vi, vj = np.meshgrid(np.arange(nz + 1), np.arange(nr + 1), indexing="ij")
        vi, vj = vi.ravel(), vj.ravel()
        nv = vi.size
        vid = np.arange(nv)
        self.v_r = vj * dr
        self.v_weight = (grid.area * np.where((vi == 0) | (vi == nz), 0.5, 1.0)
                         * np.where((vj == 0) | (vj == nr), 0.5, 1.0))
        a, b = e(vi, vj), e(vi + 1, vj)
        c, d = e(vi, vj + 1), e(vi + 1, vj + 1)
        q = np.full(nv, 1.0)
        self.vgrad_r = mat([vid] * 4, [c, d, a, b], [q / (2 * dr), q / (2 * dr), -q / (2 * dr), -q / (2 * dr)], nv)
        self.vgrad_z = mat([vid] * 4, [b, d, a, c], [q / (2 * dz), q / (2 * dz), -q / (2 * dz), -q / (2 * dz)], nv)
        self.avg_v = mat([vid] * 4, [a, b, c, d], [q / 4] * 4, nv)

        # face fluxes -> integrated cell divergence
        rows_z = np.concatenate([cell, cell])
        cols_z = np.concatenate([(i + 1) * nr + j, i * nr + j])
        vals_z = np.concatenate([np.full(cell.size, dr), np.full(cell.size, -dr)])
        self.div_zf = sp.csr_matrix((vals_z, (rows_z, cols_z)), shape=(cell.size, nzf))
        cols_r = np.concatenate([i * (nr + 1) + j + 1, i * (nr + 1) + j])
        vals_r = np.concatenate([np.full(cell.size, dz), np.full(cell.size, -dz)])
        self.div_rf = sp.csr_matrix((vals_r, (rows_z, cols_r)), shape=(cell.size, nrf))

        self._strain = sp.bmat([[self.dz_face, None],
                                [None, self.dr_face],
                                [self.vgrad_r, self.vgrad_z]], format="csr")
        self._lap_r = None

    # scalar operators ----------------------------------------------------

    def flux_laplacian(self, zf_flux_coeff: np.ndarray, rf_flux_coeff: np.ndarray) -> sp.csr_matrix:
        """Integrated div(c grad f) for face coefficients c, as a matrix on the extended array."""
        return (self.div_zf @ sp.diags(zf_flux_coeff) @ self.dz_face
                + self.div_rf @ sp.diags(rf_flux_coeff) @ self.dr_face).tocsr()

    def laplacian_ext(self, zf_coeff=None, rf_coeff=None) -> sp.csr_matrix:
        """Integrated div(c r grad f); c defaults to 1."""
        cz = self.zf_r if zf_coeff is None else self.zf_r * zf_coeff
        cr = self.rf_r if rf_coeff is None else self.rf_r * rf_coeff
        return self.flux_laplacian(cz, cr)

    @property
    def lap_r(self) -> sp.csr_matrix:
        if self._lap_r is None:
            self._lap_r = self.laplacian_ext()
        return self._lap_r

    def face_energy(self, f_ext: np.ndarray) -> float:
        """Quadrature of r |grad f|^2 over the face dual cells, ghosts included."""
        gz = self.dz_face @ f_ext
        gr = self.dr_face @ f_ext
        return float(np.sum(self.zf_weight * self.zf_r * gz**2)
                     + np.sum(self.rf_weight * self.rf_r * gr**2))

    def integrated_div(self, vz_ext: np.ndarray, vr_ext: np.ndarray, zf_scale=None, rf_scale=None) -> np.ndarray:
        """Integral over each cell of div(r s u) with face averages of u (and s)."""
        fz = self.zf_r * (self.avg_zf @ vz_ext)
        fr = self.rf_r * (self.avg_rf @ vr_ext)
        if zf_scale is not None:
            fz = fz * zf_scale
        if rf_scale is not None:
            fr = fr * rf_scale
        return self.div_zf @ fz + self.div_rf @ fr

    # viscous operator ----------------------------------------------------

    @property
    def strain(self) -> sp.csr_matrix:
        """Maps [vz_ext, vr_ext] to (dz vz on z-faces, dr vr on r-faces, shear at vertices)."""
        return self._strain

    def strain_weights(self, eta_ext: np.ndarray) -> np.ndarray:
        """Quadrature weights so that s^T W s = (1/2) int r eta |D(u)|^2."""
        ez = self.avg_zf @ eta_ext
        er = self.avg_rf @ eta_ext
        ev = self.avg_v @ eta_ext
        return np.concatenate([2.0 * self.zf_r * ez * self.zf_weight,
                               2.0 * self.rf_r * er * self.rf_weight,
                               self.v_r * ev * self.v_weight])


@lru_cache(maxsize=16)
def stencils(grid: Grid) -> Stencils:
    return Stencils(grid)


def _check_field(f: np.ndarray, grid: Grid, name: str = "field") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"{name} has shape {f.shape}, grid expects {grid.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains NaN or Inf")
    return f


# pointwise operators ---------------------------------------------------------

def grad(f: np.ndarray, grid: Grid, bc: FieldBC = ALL_NEUMANN) -> tuple[np.ndarray, np.ndarray]:
    f = _check_field(f, grid)
    st = stencils(grid)
    fe = extend(f, grid, bc)
    return (st.cgrad_z @ fe).reshape(grid.shape), (st.cgrad_r @ fe).reshape(grid.shape)


def div_r(v_z: np.ndarray, v_r: np.ndarray, grid: Grid,
          bc_z: FieldBC = ALL_NEUMANN, bc_r: FieldBC = ALL_NEUMANN) -> np.ndarray:
    """(1/r) div(r u) from conservative face fluxes."""
    v_z = _check_field(v_z, grid, "v_z")
    v_r = _check_field(v_r, grid, "v_r")
    st = stencils(grid)
    d = st.integrated_div(extend(v_z, grid, bc_z), extend(v_r, grid, bc_r))
    return d.reshape(grid.shape) / (grid.area * grid.rc)


def _face_coeff(c: np.ndarray, axis: int) -> np.ndarray:
    # arithmetic mean inside, linear extrapolation onto boundary faces
    c = np.moveaxis(c, axis, 0)
    inner = 0.5 * (c[1:] + c[:-1])
    if c.shape[0] > 1:
        lo = 1.5 * c[0] - 0.5 * c[1]
        hi = 1.5 * c[-1] - 0.5 * c[-2]
    else:
        lo = hi = c[0]
    out = np.concatenate([lo[None], inner, hi[None]], axis=0)
    return np.moveaxis(out, 0, axis)


def lap_weighted(coeff: np.ndarray, f: np.ndarray, grid: Grid, bc: FieldBC = ALL_NEUMANN) -> np.ndarray:
    """div(coeff grad f) in conservative flux form; coeff carries any r weight."""
    coeff = _check_field(coeff, grid, "coeff")
    f = _check_field(f, grid)
    cz = _face_coeff(coeff, 0)   # (n_z+1, n_r)
    cr = _face_coeff(coeff, 1)   # (n_z, n_r+1)
    if np.any(cz[1:-1] <= 0) or np.any(cr[:, 1:-1] <= 0):
        raise ValueError("non-positive face coefficient in weighted Laplacian")
    # boundary faces are extrapolated; r itself extrapolates to exactly 0 on the axis
    cz[[0, -1]] = np.maximum(cz[[0, -1]], 0.0)
    cr[:, [0, -1]] = np.maximum(cr[:, [0, -1]], 0.0)
    st = stencils(grid)
    L = st.flux_laplacian(cz.ravel(), cr.ravel())
    return (L @ extend(f, grid, bc)).reshape(grid.shape) / grid.area


def viscous_apply(eta: np.ndarray, v_z: np.ndarray, v_r: np.ndarray, grid: Grid,
                  bc_z: FieldBC = ALL_NEUMANN, bc_r: FieldBC = ALL_NEUMANN) -> tuple[np.ndarray, np.ndarray]:
    """-(1/r) div(eta r D(u)) + (0, 2 eta v_r / r^2)."""
    eta = _check_field(eta, grid, "eta")
    if np.any(eta <= 0):
        raise ValueError("viscosity must be positive")
    st = stencils(grid)
    Ez, bz = ghost_operator(grid, bc_z)
    Er, br = ghost_operator(grid, bc_r)
    u_ext = np.concatenate([Ez @ v_z.ravel() + bz, Er @ v_r.ravel() + br])
    w = st.strain_weights(extend(eta, grid, ALL_NEUMANN))
    S = st.strain
    E0 = sp.block_diag([Ez, Er], format="csr")
    force = (E0.T @ (S.T @ (w * (S @ u_ext))))   # = (S E0)^T W S u_ext
    n = grid.size
    rc = grid.rc
    out_z = force[:n].reshape(grid.shape) / grid.area
    out_r = force[n:].reshape(grid.shape) / grid.area + 2.0 * eta * v_r / rc
    return out_z / rc, out_r / rc


def j_flux(mu: np.ndarray, params: Params, grid: Grid, bc: FieldBC = ALL_NEUMANN) -> tuple[np.ndarray, np.ndarray]:
    """Diffusive density flux L_d Re (1 - lambda_rho)/2 grad(mu)."""
    c = params.diffusion * params.reynolds * (1.0 - params.density_ratio) / 2.0
    gz, gr = grad(mu, grid, bc)
    return c * gz, c * gr
