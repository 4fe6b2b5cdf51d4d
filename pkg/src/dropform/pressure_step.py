"""Penalty pressure update driven by the divergence of the new velocity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Grid, InletData, Params, SolvabilityError, State
from . import ops
from .linsolve import Systems, solve


@dataclass
class PressureSplit:
    p1: np.ndarray
    p2: np.ndarray
    T_denominator: float
    divergence_work: float    # sum of div(r u) p2 over the cells


def integrated_divergence(state: State, grid: Grid, inlet: InletData) -> np.ndarray:
    """Cell integrals of div(r u), using the same face fluxes as `ops.div_r`."""
    st = ops.stencils(grid)
    vz_ext = ops.extend(state.v_z, grid, ops.axial_velocity_bc(inlet))
    vr_ext = ops.extend(state.v_r, grid, ops.radial_velocity_bc())
    return st.integrated_div(vz_ext, vr_ext).reshape(grid.shape)


def divergence_norm(state: State, grid: Grid, inlet: InletData) -> float:
    """max |(1/r) div(r u)|."""
    d = integrated_divergence(state, grid, inlet) / (grid.area * grid.rc)
    return float(np.max(np.abs(d)))


def solve_step3(state: State, systems: Systems, grid: Grid, params: Params,
                inlet: InletData | None = None) -> tuple[State, PressureSplit]:
    inlet = inlet or InletData.build(grid, params)
    dt, alpha = params.dt, params.ode_damping
    div = integrated_divergence(state, grid, inlet)
    coef = params.penalty_chi * params.reynolds / dt
    # the assembled matrix is -div(r grad .) per unit area
    p2 = solve(systems.pressure, (-coef * div / grid.area).ravel()).reshape(grid.shape)
    p1 = state.p
    work2 = float(np.sum(div * p2))
    t_den = 1.0 / dt - alpha * work2
    if not t_den > 0:
        raise SolvabilityError("T denominator is not positive", state.step_index, t_den)
    T = (state.T_scalar / dt + alpha * float(np.sum(div * p1))) / t_den if alpha > 0 else state.T_scalar
    new = state.copy()
    new.p_prev = state.p.copy()
    new.p = p1 + T * p2
    new.T_scalar = T
    return new, PressureSplit(p1=p1, p2=p2, T_denominator=t_den, divergence_work=work2)
