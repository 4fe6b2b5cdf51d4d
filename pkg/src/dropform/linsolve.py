"""Assembly and solution of the three recurring sparse systems.

The phase-field block and the pressure matrix never change during a run and
are factored once. The velocity matrix changes every step because density and
viscosity follow the interface.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import Grid, Params
from . import ops

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Linear solve failed; `residual` holds the last relative residual."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-10
    method: str = "auto"          # "auto", "direct" or "iterative"
    direct_limit: int = 64_000    # cells; above this "auto" goes iterative
    max_iter: int = 2000
    refine_steps: int = 3

    def __post_init__(self):
        if self.method not in ("auto", "direct", "iterative"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")


class SparseSystem:
    """A square CSR matrix plus its factorization or preconditioner."""

    def __init__(self, matrix, symmetric: bool, config: SolverConfig | None = None,
                 label: str = "", cells: int | None = None):
        A = sp.csr_matrix(matrix, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"{label} matrix is not square: {A.shape}")
        A.sum_duplicates()
        A.eliminate_zeros()
        empty = np.flatnonzero(np.diff(A.indptr) == 0)
        if empty.size:
            raise SolverError(f"{label} matrix has {empty.size} empty rows (first {empty[0]})")
        self.matrix = A
        self.symmetric = bool(symmetric)
        self.config = config or SolverConfig()
        self.label = label
        cells = A.shape[0] if cells is None else cells
        method = self.config.method
        if method == "auto":
            method = "direct" if cells <= self.config.direct_limit else "iterative"
        self.method = method
        self._setup()

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def _setup(self):
        A = self.matrix
        if self.method == "direct":
            try:
                # minimum degree on A + A^T fills in far less for the symmetric systems
                spec = "MMD_AT_PLUS_A" if self.symmetric else "COLAMD"
                self._lu = spla.splu(A.tocsc(), permc_spec=spec)
            except RuntimeError as exc:
                raise SolverError(f"{self.label} factorization failed: {exc}") from exc
            self._prec = None
        elif self.symmetric:
            import pyamg
            ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
            self._prec = ml.aspreconditioner(cycle="V")
            self._lu = None
        else:
            ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
            self._prec = spla.LinearOperator(A.shape, ilu.solve)
            self._lu = None

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.matrix.indptr, self.matrix.indices, self.matrix.data):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def _solve_one(self, b: np.ndarray) -> np.ndarray:
        A = self.matrix
        if self._lu is not None:
            x = self._lu.solve(b)
            # a few sweeps of refinement if the direct solve is not tight enough
            for _ in range(self.config.refine_steps):
                res = b - A @ x
                if np.linalg.norm(res) <= self.config.rtol * np.linalg.norm(b):
                    break
                x = x + self._lu.solve(res)
            return x
        tol = 0.1 * self.config.rtol
        if self.symmetric:
            x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=self.config.max_iter, M=self._prec)
        else:
            x, info = spla.bicgstab(A, b, rtol=tol, atol=0.0, maxiter=self.config.max_iter, M=self._prec)
        if info > 0:
            rel = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
            raise SolverError(f"{self.label}: iteration cap {self.config.max_iter} reached", rel)
        return x


def solve(system: SparseSystem, rhs: np.ndarray) -> np.ndarray:
    """Solve for one right-hand side (1-D) or several (columns of a 2-D array)."""
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != system.n:
        raise ValueError(f"{system.label}: rhs has {b.shape[0]} rows, system has {system.n}")
    if not np.all(np.isfinite(b)):
        raise SolverError(f"{system.label}: NaN or Inf in right-hand side")
    cols = b.reshape(system.n, -1)
    out = np.empty_like(cols)
    for k in range(cols.shape[1]):
        bk = cols[:, k]
        nb = np.linalg.norm(bk)
        if nb == 0.0:
            out[:, k] = 0.0
            continue
        x = system._solve_one(bk)
        if not np.all(np.isfinite(x)):
            raise SolverError(f"{system.label}: NaN in solution")
        rel = np.linalg.norm(bk - system.matrix @ x) / nb
        if rel > system.config.rtol:
            raise SolverError(f"{system.label}: relative residual {rel:.3e} above {system.config.rtol:.1e}", rel)
        out[:, k] = x
    return out.reshape(b.shape)


# assembly ------------------------------------------------------------------

def scalar_laplacian(grid: Grid, bc: ops.FieldBC) -> sp.csr_matrix:
    """Integrated div(r grad f) on cell unknowns for the given boundary kinds."""
    st = ops.stencils(grid)
    E, _ = ops.ghost_operator(grid, bc.homogeneous())
    return (st.lap_r @ E).tocsr()


def assemble_ch_block(grid: Grid, params: Params, config: SolverConfig | None = None) -> SparseSystem:
    """Shared matrix of the phase-field sub-problems, unknowns stacked as [phi, mu].

    Rows (divided by the cell area):
      r phi / dt - L_d lap(mu)                   = rhs_1
      eps lap(phi) - (r s / eps) phi + r mu      = rhs_2
    with lap = div(r grad .), Dirichlet at the inlet and Neumann elsewhere.
    """
    lap = scalar_laplacian(grid, ops.potential_bc()) / grid.area
    r = grid.rc.ravel()
    eps = params.cahn
    A = sp.bmat([[sp.diags(r / params.dt), -params.diffusion * lap],
                 [eps * lap - sp.diags(r * params.stabilizer_s / eps), sp.diags(r)]], format="csr")
    return SparseSystem(A, symmetric=False, config=config, label="phase-field block", cells=grid.size)


@lru_cache(maxsize=16)
def strain_map(grid: Grid) -> sp.csr_matrix:
    """Strain samples as a matrix on cell velocities [v_z, v_r] (homogeneous data)."""
    st = ops.stencils(grid)
    Ez, _ = ops.ghost_operator(grid, ops.AXIAL_VELOCITY_KINDS)
    Er, _ = ops.ghost_operator(grid, ops.radial_velocity_bc())
    return (st.strain @ sp.block_diag([Ez, Er], format="csr")).tocsr()


def velocity_operator(grid: Grid, weights: np.ndarray) -> sp.csr_matrix:
    """B^T W B, the integrated viscous stress operator."""
    B = strain_map(grid)
    return (B.T @ sp.diags(weights) @ B).tocsr()


def assemble_velocity(grid: Grid, rho_np1: np.ndarray, rho_n: np.ndarray, eta_np1: np.ndarray,
                      params: Params, config: SolverConfig | None = None) -> SparseSystem:
    """Integrated momentum operator: mass + viscous stress + hoop term, unknowns [v_z, v_r]."""
    for name, arr in (("rho_np1", rho_np1), ("rho_n", rho_n), ("eta_np1", eta_np1)):
        if np.any(~np.isfinite(arr)) or np.any(np.asarray(arr) <= 0):
            raise SolverError(f"{name} must be positive and finite")
    st = ops.stencils(grid)
    w = st.strain_weights(ops.extend(eta_np1, grid, ops.ALL_NEUMANN))
    visc = velocity_operator(grid, w)
    r = grid.rc.ravel()
    mass = params.reynolds * r * (rho_np1.ravel() + rho_n.ravel()) / (2.0 * params.dt) * grid.area
    hoop = 2.0 * eta_np1.ravel() / r * grid.area
    diag = np.concatenate([mass, mass + hoop])
    A = (visc + sp.diags(diag)).tocsr()
    return SparseSystem(A, symmetric=True, config=config, label="velocity", cells=grid.size)


def assemble_pressure(grid: Grid, params: Params | None = None,
                      config: SolverConfig | None = None) -> SparseSystem:
    """-div(r grad p) per unit area, Neumann except p = 0 at the outlet (SPD)."""
    A = -scalar_laplacian(grid, ops.pressure_bc()) / grid.area
    return SparseSystem(A, symmetric=True, config=config, label="pressure", cells=grid.size)


@dataclass
class Systems:
    """Factored constant matrices shared by every step of a run."""
    ch_block: SparseSystem
    pressure: SparseSystem
    config: SolverConfig

    @staticmethod
    def build(grid: Grid, params: Params, config: SolverConfig | None = None) -> "Systems":
        config = config or SolverConfig()
        return Systems(assemble_ch_block(grid, params, config), assemble_pressure(grid, params, config), config)
