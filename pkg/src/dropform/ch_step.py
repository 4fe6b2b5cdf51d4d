"""Phase-field update: three solves with the shared block matrix, then the
U and Q scalars and the surface-tension velocity predictor."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (Grid, InletData, Params, SolvabilityError, State, density,
                     sav_radicand)
from . import ops
from .linsolve import Systems, solve


@dataclass
class ChSplit:
    phi11: np.ndarray
    mu11: np.ndarray
    phi12: np.ndarray
    mu12: np.ndarray
    phi21: np.ndarray
    mu21: np.ndarray
    U1: float
    U2: float
    g_n: float
    H_n: np.ndarray
    U_denominator: float
    Q_denominator: float
    tilde_vz: np.ndarray      # predictor velocity after the surface-tension substep
    tilde_vz2: np.ndarray     # Q-proportional part of the predictor
    tilde_vr: np.ndarray
    tilde_vr2: np.ndarray
    phi_n: np.ndarray         # step-n fields still needed by the momentum update
    mu_n: np.ndarray

    # the fourth sub-problem coincides with the second one
    @property
    def phi22(self) -> np.ndarray:
        return self.phi12

    @property
    def mu22(self) -> np.ndarray:
        return self.mu12


def compute_H(phi_n: np.ndarray, grid: Grid, params: Params) -> np.ndarray:
    """(phi^3 - phi - s phi) / sqrt(radicand)."""
    rad = sav_radicand(phi_n, grid, params)
    if not rad > 0:
        raise SolvabilityError(
            f"potential radicand {rad:g} is not positive; increase radicand_offset_B", value=rad)
    s = params.stabilizer_s
    return (phi_n**3 - phi_n - s * phi_n) / math.sqrt(rad)


def _weighted_integral(grid: Grid, H: np.ndarray, f: np.ndarray) -> float:
    return float(np.sum(grid.rc * H * f) * grid.area)


def phase_data_rhs(grid: Grid, params: Params, inlet: InletData) -> np.ndarray:
    """Contribution of the inlet phase values to the second block row."""
    st = ops.stencils(grid)
    _, b = ops.ghost_operator(grid, ops.phase_bc(inlet))
    return -params.cahn * (st.lap_r @ b) / grid.area


def solve_step1(state: State, systems: Systems, grid: Grid, params: Params,
                inlet: InletData | None = None) -> tuple[State, ChSplit]:
    inlet = inlet or InletData.build(grid, params)
    n = grid.size
    r = grid.rc
    dt, eps = params.dt, params.cahn

    H = compute_H(state.phi, grid, params)
    gz, gr = ops.grad(state.phi, grid, ops.phase_bc(inlet))
    advect = state.v_z * gz + state.v_r * gr

    rhs = np.zeros((2 * n, 3))
    rhs[:n, 0] = (r * state.phi / dt).ravel()
    rhs[n:, 0] = phase_data_rhs(grid, params, inlet)
    rhs[n:, 1] = (r * H / eps).ravel()
    rhs[:n, 2] = (-r * advect).ravel()
    sol = solve(systems.ch_block, rhs)
    shp = grid.shape
    phi11, mu11 = sol[:n, 0].reshape(shp), sol[n:, 0].reshape(shp)
    phi12, mu12 = sol[:n, 1].reshape(shp), sol[n:, 1].reshape(shp)
    phi21, mu21 = sol[:n, 2].reshape(shp), sol[n:, 2].reshape(shp)

    g_n = state.U_scalar - 0.5 * _weighted_integral(grid, H, state.phi)
    denom = 1.0 - 0.5 * _weighted_integral(grid, H, phi12)
    if not denom > 0:
        raise SolvabilityError("U denominator is not positive", state.step_index, denom)
    U1 = (0.5 * _weighted_integral(grid, H, phi11) + g_n) / denom
    U2 = 0.5 * _weighted_integral(grid, H, phi21) / denom

    phi1, mu1 = phi11 + U1 * phi12, mu11 + U1 * mu12
    phi2, mu2 = phi21 + U2 * phi12, mu21 + U2 * mu12

    rho_n = density(state.phi, params)
    scale = dt * params.sigma_coef / (params.reynolds * rho_n) * state.mu
    tvz2, tvr2 = scale * gz, scale * gr

    alpha = params.ode_damping
    tilde_advect = tvz2 * gz + tvr2 * gr
    q_den = 1.0 / dt - alpha * float(np.sum(r * advect * mu2 - r * tilde_advect * state.mu)) * grid.area
    if not q_den > 0:
        raise SolvabilityError("Q denominator is not positive", state.step_index, q_den)
    q_num = state.Q_scalar / dt + alpha * float(np.sum(r * advect * (mu1 - state.mu))) * grid.area
    # without damping the scalar is frozen; skip the division so it stays bit-exact
    Q = q_num / q_den if alpha > 0 else state.Q_scalar

    new = state.copy()
    new.phi = phi1 + Q * phi2
    new.mu = mu1 + Q * mu2
    new.U_scalar = U1 + Q * U2
    new.Q_scalar = Q
    split = ChSplit(phi11=phi11, mu11=mu11, phi12=phi12, mu12=mu12, phi21=phi21, mu21=mu21,
                    U1=U1, U2=U2, g_n=g_n, H_n=H, U_denominator=denom, Q_denominator=q_den,
                    tilde_vz=state.v_z + Q * tvz2, tilde_vz2=tvz2,
                    tilde_vr=state.v_r + Q * tvr2, tilde_vr2=tvr2,
                    phi_n=state.phi, mu_n=state.mu)
    return new, split
