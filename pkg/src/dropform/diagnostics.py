"""Energy audits, scalar drift and droplet geometry."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .domain import Grid, InletData, Params, State, density, double_well, viscosity
from . import ops
from .momentum_step import VelocityExtension, compute_K_functional


@dataclass
class EnergyBreakdown:
    kinetic: float
    gradient: float
    quadratic: float
    boundary_viscous: float     # inlet viscous work paired with the data, scaled by dt
    viscous_history: float      # (dt/4) int r eta |D(u)|^2
    potential_U: float
    scalar_Q: float
    scalar_R: float
    scalar_T: float
    scalar_K: float
    pressure: float

    def total(self) -> float:
        return float(sum(asdict(self).values()))


def _kinetic(state: State, grid: Grid, params: Params) -> float:
    rho = density(state.phi, params)
    return 0.5 * params.reynolds * float(np.sum(grid.rc * rho * (state.v_z**2 + state.v_r**2))) * grid.area


def _gradient(state: State, grid: Grid, params: Params, inlet: InletData) -> float:
    st = ops.stencils(grid)
    phi_ext = ops.extend(state.phi, grid, ops.phase_bc(inlet))
    return 0.5 * params.sigma_coef * params.cahn * st.face_energy(phi_ext)


def _damped_square(x: float, alpha: float) -> float:
    """x^2 / (2 alpha); a frozen scalar (alpha = 0) is a constant and is left out."""
    return x * x / (2.0 * alpha) if alpha > 0 else 0.0


def energy_breakdown(state: State, grid: Grid, params: Params,
                     inlet: InletData | None = None) -> EnergyBreakdown:
    inlet = inlet or InletData.build(grid, params)
    st = ops.stencils(grid)
    B, eps, alpha, dt = params.sigma_coef, params.cahn, params.ode_damping, params.dt
    eta = viscosity(state.phi, params)
    w = st.strain_weights(ops.extend(eta, grid, ops.ALL_NEUMANN))
    ext = VelocityExtension.build(grid, inlet)
    strain = st.strain @ ext.extend(state.v_z, state.v_r)
    data_strain = st.strain @ ext.data
    p_ext = ops.extend(state.p, grid, ops.pressure_bc())
    return EnergyBreakdown(
        kinetic=_kinetic(state, grid, params),
        gradient=_gradient(state, grid, params, inlet),
        quadratic=B * params.stabilizer_s / (2 * eps) * grid.integrate_r(state.phi**2),
        boundary_viscous=-dt * float(data_strain @ (w * strain)),
        viscous_history=0.5 * dt * float(strain @ (w * strain)),
        potential_U=B / eps * state.U_scalar**2,
        scalar_Q=B * _damped_square(state.Q_scalar, alpha),
        scalar_R=_damped_square(state.R_scalar, alpha),
        scalar_T=_damped_square(state.T_scalar, alpha),
        scalar_K=state.K_scalar**2,
        pressure=dt**2 / (2 * params.penalty_chi * params.reynolds) * st.face_energy(p_ext),
    )


def energy_modified(state: State, grid: Grid, params: Params, inlet: InletData | None = None) -> float:
    return energy_breakdown(state, grid, params, inlet).total()


@dataclass
class BoundaryWorkTracker:
    """Trapezoidal time integral of the negative boundary work."""
    accumulated: float = 0.0
    last_rate: float | None = None

    def current_rate(self, state: State, grid: Grid, params: Params, inlet: InletData) -> float:
        frozen = State(phi=state.phi, mu=state.mu, v_z=state.v_z, v_r=state.v_r,
                       p=state.p, p_prev=state.p, U_scalar=state.U_scalar)
        return compute_K_functional(frozen, grid, params, inlet=inlet)

    def update(self, state: State, grid: Grid, params: Params, inlet: InletData, dt: float) -> float:
        rate = self.current_rate(state, grid, params, inlet)
        if self.last_rate is not None:
            self.accumulated -= 0.5 * dt * (self.last_rate + rate)
        self.last_rate = rate
        return self.accumulated


def energy_original(state: State, history: BoundaryWorkTracker, grid: Grid, params: Params,
                    inlet: InletData | None = None) -> float:
    inlet = inlet or InletData.build(grid, params)
    free = params.sigma_coef / params.cahn * grid.integrate_r(double_well(state.phi))
    return (_kinetic(state, grid, params) + _gradient(state, grid, params, inlet)
            + free + history.accumulated)


def energy_offset(state: State, params: Params) -> float:
    """The part of E_M - E_O that the continuous model predicts to be constant."""
    alpha = params.ode_damping
    return (params.sigma_coef * _damped_square(state.Q_scalar, alpha)
            + _damped_square(state.R_scalar, alpha) + _damped_square(state.T_scalar, alpha)
            + params.radicand_offset_G
            + params.sigma_coef / params.cahn * params.radicand_offset_B)


def scalar_drift(state: State) -> tuple[float, float, float]:
    return abs(state.Q_scalar - 1.0), abs(state.R_scalar - 1.0), abs(state.T_scalar - 1.0)


_FACE_ADJACENCY = ndimage.generate_binary_structure(2, 1)


def droplet_metrics(phi: np.ndarray, grid: Grid) -> tuple[float, bool]:
    """(radius of the nozzle-attached inner fluid, whether a detached blob exists)."""
    # the sign pattern decides topology; clipping keeps the crossing estimate
    # independent of overshoots beyond the pure phases
    phi = np.clip(np.asarray(phi, dtype=float), -1.0, 1.0)
    inner = phi < 0
    if not inner.any():
        return 0.0, False
    labels, count = ndimage.label(inner, structure=_FACE_ADJACENCY)
    attached = set(np.unique(labels[0, grid.inner_inlet])) - {0}
    pinch = any(k not in attached for k in range(1, count + 1))
    if not attached:
        return 0.0, pinch
    mask = np.isin(labels, list(attached))
    radius = 0.0
    r = grid.r
    for i in np.flatnonzero(mask.any(axis=1)):
        js = np.flatnonzero(mask[i])
        j = js[-1]
        if j + 1 == grid.n_r:
            edge = grid.radius_a
        elif phi[i, j + 1] < 0:
            # the neighbour belongs to another blob; stop at the cell face
            edge = r[j] + 0.5 * grid.dr
        else:
            a, b = phi[i, j], phi[i, j + 1]
            edge = r[j] + grid.dr * a / (a - b)
        radius = max(radius, edge)
    return float(radius), bool(pinch)


@dataclass
class DiagnosticsRecord:
    step: int
    time: float
    E_O: float
    E_M: float
    Q: float
    R: float
    T: float
    U: float
    K: float
    S: float
    divnorm: float
    Rd: float
    pinch: bool

    COLUMNS = ("step", "time", "E_O", "E_M", "Q", "R", "T", "U", "K", "S", "divnorm", "Rd", "pinch")

    def row(self) -> list[str]:
        out = []
        for name in self.COLUMNS:
            v = getattr(self, name)
            if isinstance(v, (bool, np.bool_)):
                out.append("1" if v else "0")
            elif isinstance(v, (int, np.integer)):
                out.append(str(int(v)))
            else:
                out.append("%.17g" % v)
        return out
