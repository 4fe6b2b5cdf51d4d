"""Momentum update: boundary work functional, two velocity solves sharing one
matrix, the R scalar and the K / accumulator updates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (Grid, InletData, Params, SolvabilityError, State, density,
                     interpolate_material, viscosity)
from . import ops
from .ch_step import ChSplit
from .linsolve import Systems, assemble_velocity, solve, strain_map


@dataclass
class MomentumSplit:
    vz1: np.ndarray
    vr1: np.ndarray
    vz2: np.ndarray
    vr2: np.ndarray
    K1: float
    K2: float
    Kn_functional: float
    R_denominator: float
    velocity_checksum: str


@dataclass(frozen=True)
class VelocityExtension:
    """Ghost maps for both velocity components, data included."""
    Ez: object
    bz: np.ndarray
    Er: object
    br: np.ndarray

    @staticmethod
    def build(grid: Grid, inlet: InletData) -> "VelocityExtension":
        Ez, bz = ops.ghost_operator(grid, ops.axial_velocity_bc(inlet))
        Er, br = ops.ghost_operator(grid, ops.radial_velocity_bc())
        return VelocityExtension(Ez, bz, Er, br)

    def extend(self, v_z: np.ndarray, v_r: np.ndarray) -> np.ndarray:
        return np.concatenate([self.Ez @ v_z.ravel() + self.bz, self.Er @ v_r.ravel() + self.br])

    @property
    def data(self) -> np.ndarray:
        return np.concatenate([self.bz, self.br])


def pressure_extrapolation(state: State) -> np.ndarray:
    return 2.0 * state.p - state.p_prev


def compute_K_functional(state: State, grid: Grid, params: Params,
                         phi_np1: np.ndarray | None = None,
                         inlet: InletData | None = None) -> float:
    """Boundary work through the inlet and outlet caps.

    `state` holds the step-n fields; material coefficients follow phi_np1
    (defaults to state.phi). Inlet face values are the prescribed data; outlet
    face values are those of the last cell row, with p = 0 there.
    """
    inlet = inlet or InletData.build(grid, params)
    phi_np1 = state.phi if phi_np1 is None else phi_np1
    r, ds = grid.r, grid.dr
    Re = params.reynolds

    v_in = inlet.vz
    rho_in = interpolate_material(inlet.phi, params.density_ratio)
    eta_in = interpolate_material(inlet.phi, params.viscosity_ratio)
    p_ext = pressure_extrapolation(state)
    dvdz_in = 2.0 * (state.v_z[0] - v_in) / grid.dz
    dmudz_in = 2.0 * state.mu[0] / grid.dz

    v_out = state.v_z[-1]
    rho_out = density(phi_np1[-1], params)

    inflow = np.sum(r * (0.5 * Re * rho_in * v_in**3 + p_ext[0] * v_in
                         - 2.0 * eta_in * v_in * dvdz_in)) * ds
    outflow = np.sum(r * 0.5 * Re * rho_out * v_out**3) * ds   # p = 0 on the outlet
    flux = (params.diffusion * Re * (1.0 - params.density_ratio) / 4.0
            * np.sum(r * dmudz_in * v_in**2) * ds)
    return float(inflow - outflow + flux)


def gravity_force(rho_np1: np.ndarray, params: Params) -> np.ndarray:
    """Axial body force per unit volume (before the r weight)."""
    if not params.gravity_on:
        return np.zeros_like(rho_np1)
    if params.gravity_mode == "capillary":
        return params.bond / params.capillary * rho_np1 * params.gravity_g
    return rho_np1 * params.gravity_g


def explicit_terms(state: State, ch: ChSplit, grid: Grid, params: Params, inlet: InletData,
                   ext: VelocityExtension, w_np1: np.ndarray) -> np.ndarray:
    """Integrated right-hand side of the R-proportional velocity part."""
    st = ops.stencils(grid)
    Re = params.reynolds
    r = grid.rc
    area = grid.area
    n = grid.size
    rho_n = density(ch.phi_n, params)
    u_ext = ext.extend(state.v_z, state.v_r)
    vz_ext, vr_ext = u_ext[:st.n_ext], u_ext[st.n_ext:]

    dz_vz = (st.cgrad_z @ vz_ext).reshape(grid.shape)
    dr_vz = (st.cgrad_r @ vz_ext).reshape(grid.shape)
    dz_vr = (st.cgrad_z @ vr_ext).reshape(grid.shape)
    dr_vr = (st.cgrad_r @ vr_ext).reshape(grid.shape)
    conv_z = state.v_z * dz_vz + state.v_r * dr_vz
    conv_r = state.v_z * dz_vr + state.v_r * dr_vr

    rho_ext = density(ops.extend(state.phi, grid, ops.phase_bc(inlet)), params)
    div_rho_u = st.integrated_div(vz_ext, vr_ext,
                                  zf_scale=st.avg_zf @ rho_ext,
                                  rf_scale=st.avg_rf @ rho_ext).reshape(grid.shape)

    gpz, gpr = ops.grad(pressure_extrapolation(state), grid, ops.pressure_bc())

    cj = params.diffusion * Re * (1.0 - params.density_ratio) / 2.0
    mu_ext = ops.extend(ch.mu_n, grid, ops.potential_bc())
    div_j = (cj * (st.lap_r @ mu_ext)).reshape(grid.shape)
    jz = cj * (st.cgrad_z @ mu_ext).reshape(grid.shape)
    jr = cj * (st.cgrad_r @ mu_ext).reshape(grid.shape)

    fz = (-Re * rho_n * r * conv_z * area - 0.5 * Re * div_rho_u * state.v_z
          - r * gpz * area - 0.5 * div_j * state.v_z - r * (jz * dz_vz + jr * dr_vz) * area)
    fr = (-Re * rho_n * r * conv_r * area - 0.5 * Re * div_rho_u * state.v_r
          - r * gpr * area - 0.5 * div_j * state.v_r - r * (jz * dz_vr + jr * dr_vr) * area)
    S_n = st.strain @ u_ext
    visc = strain_map(grid).T @ (w_np1 * S_n)
    f2 = np.concatenate([fz.ravel(), fr.ravel()]) - visc
    assert f2.shape == (2 * n,)
    return f2


def solve_step2(state: State, ch: ChSplit, grid: Grid, params: Params,
                systems: Systems | None = None, inlet: InletData | None = None) -> tuple[State, MomentumSplit]:
    """`state` is the output of the phase-field step: phi, mu at n+1, velocity and pressure at n."""
    if not state.S_accum > 0:
        raise SolvabilityError("boundary-work accumulator is not positive; increase radicand_offset_G",
                               state.step_index, state.S_accum)
    inlet = inlet or InletData.build(grid, params)
    config = systems.config if systems is not None else None
    st = ops.stencils(grid)
    Re, dt, alpha = params.reynolds, params.dt, params.ode_damping
    r = grid.rc
    area = grid.area
    n = grid.size

    rho_n = density(ch.phi_n, params)
    rho_1 = density(state.phi, params)
    eta_n = viscosity(ch.phi_n, params)
    eta_1 = viscosity(state.phi, params)
    w_1 = st.strain_weights(ops.extend(eta_1, grid, ops.ALL_NEUMANN))
    w_n = st.strain_weights(ops.extend(eta_n, grid, ops.ALL_NEUMANN))
    w_mix = np.sqrt(w_1 * w_n)

    ext = VelocityExtension.build(grid, inlet)
    S_n = st.strain @ ext.extend(state.v_z, state.v_r)
    data_strain = st.strain @ ext.data
    Bt = strain_map(grid).T

    system = assemble_velocity(grid, rho_1, rho_n, eta_1, params, config)

    mass = Re * r * rho_n / dt * area
    rhs1 = np.concatenate([(mass * ch.tilde_vz + r * gravity_force(rho_1, params) * area).ravel(),
                           (mass * ch.tilde_vr).ravel()])
    rhs1 += Bt @ (w_mix * S_n) - Bt @ (w_1 * data_strain)
    f2 = explicit_terms(state, ch, grid, params, inlet, ext, w_1)

    sol = solve(system, np.column_stack([rhs1, f2]))
    u1, u2 = sol[:, 0], sol[:, 1]

    Kn = compute_K_functional(
        State(phi=ch.phi_n, mu=ch.mu_n, v_z=state.v_z, v_r=state.v_r, p=state.p,
              p_prev=state.p_prev, U_scalar=state.U_scalar),
        grid, params, phi_np1=state.phi, inlet=inlet)
    root = math.sqrt(state.S_accum)
    K1 = state.K_scalar
    K2 = -dt * Kn / (2.0 * root)
    r_den = (1.0 / dt + alpha * float(f2 @ u2) + alpha * float(S_n @ (w_1 * S_n))
             - alpha * K2 * Kn / root)
    if not r_den > 0:
        raise SolvabilityError("R denominator is not positive", state.step_index, r_den)
    r_num = state.R_scalar / dt - alpha * float(f2 @ u1) + alpha * K1 * Kn / root
    R = r_num / r_den if alpha > 0 else state.R_scalar

    u = u1 + R * u2
    new = state.copy()
    new.v_z = u[:n].reshape(grid.shape)
    new.v_r = u[n:].reshape(grid.shape)
    new.R_scalar = R
    new.K_scalar = K1 + R * K2
    new.S_accum = state.S_accum - dt * Kn
    if not new.S_accum > 0:
        raise SolvabilityError("boundary-work accumulator is not positive; increase radicand_offset_G",
                               state.step_index, new.S_accum)
    split = MomentumSplit(vz1=u1[:n].reshape(grid.shape), vr1=u1[n:].reshape(grid.shape),
                          vz2=u2[:n].reshape(grid.shape), vr2=u2[n:].reshape(grid.shape),
                          K1=K1, K2=K2, Kn_functional=Kn, R_denominator=r_den,
                          velocity_checksum=system.checksum())
    return new, split
