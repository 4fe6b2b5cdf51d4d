"""Grid, parameters, state and boundary data for the coflowing-nozzle domain.

The computational box is [0, L] x [0, a] in (z, r). Unknowns live at cell
centres, so the axis r = 0 is a cell face and never a collocation point.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

logger = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """Raised for inconsistent grid, parameter or scenario settings."""


class SolvabilityError(RuntimeError):
    """A scalar denominator or the boundary-work accumulator lost its sign."""

    def __init__(self, message: str, step: int | None = None, value: float = float("nan")):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
        self.value = value


class Segment(enum.IntEnum):
    INTERIOR = 0
    WALL = 1          # r = a, no slip
    OUTER_INLET = 2   # z = 0, 1 < r <= a
    INNER_INLET = 3   # z = 0, 0 <= r <= 1
    AXIS = 4          # r = 0, symmetry
    OUTLET = 5        # z = L


@dataclass(frozen=True)
class Grid:
    n_z: int
    n_r: int
    length_L: float
    radius_a: float

    def __post_init__(self):
        if int(self.n_z) != self.n_z or int(self.n_r) != self.n_r:
            raise ConfigurationError("cell counts must be integers")
        if self.n_z <= 0 or self.n_r <= 0:
            raise ConfigurationError(f"cell counts must be positive, got n_z={self.n_z}, n_r={self.n_r}")
        if not (self.length_L > 0 and self.radius_a > 0):
            raise ConfigurationError("domain lengths must be positive")
        if self.radius_a <= 1.0:
            raise ConfigurationError(
                f"outer radius a={self.radius_a} must exceed the unit nozzle radius")

    @property
    def dz(self) -> float:
        return self.length_L / self.n_z

    @property
    def dr(self) -> float:
        return self.radius_a / self.n_r

    @property
    def area(self) -> float:
        return self.dz * self.dr

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_z, self.n_r)

    @property
    def size(self) -> int:
        return self.n_z * self.n_r

    @property
    def z(self) -> np.ndarray:
        return (np.arange(self.n_z) + 0.5) * self.dz

    @property
    def r(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) * self.dr

    @property
    def r_faces(self) -> np.ndarray:
        """Radii of the n_r + 1 radial faces, axis first."""
        return np.arange(self.n_r + 1) * self.dr

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.z, self.r, indexing="ij")

    @property
    def rc(self) -> np.ndarray:
        """Cell-centre radius broadcast to the field shape."""
        return np.broadcast_to(self.r[None, :], self.shape)

    def integrate(self, f: np.ndarray) -> float:
        """Midpoint rule for a domain integral of f dr dz."""
        return float(np.sum(f) * self.area)

    def integrate_r(self, f: np.ndarray) -> float:
        """Midpoint rule for a domain integral of r f dr dz."""
        return float(np.sum(f * self.r[None, :]) * self.area)

    @property
    def inner_inlet(self) -> np.ndarray:
        """Mask over inlet faces (indexed by j) that belong to the nozzle."""
        return self.r < 1.0

    def node_segments(self) -> np.ndarray:
        """Segment id for every vertex of the (n_z+1) x (n_r+1) lattice."""
        seg = np.zeros((self.n_z + 1, self.n_r + 1), dtype=np.int8)
        rn = self.r_faces
        inner = rn <= 1.0 + 1e-12
        seg[:, 0] = Segment.AXIS
        seg[:, -1] = Segment.WALL
        seg[-1, :-1] = Segment.OUTLET
        seg[0, :] = np.where(inner, Segment.INNER_INLET, Segment.OUTER_INLET)
        return seg

    def classify(self, z: float, r: float) -> Segment:
        """Segment of a boundary point, with the corner tie-breaks applied."""
        tol = 1e-12 * max(self.length_L, self.radius_a)
        if abs(z) <= tol:
            return Segment.INNER_INLET if r <= 1.0 + tol else Segment.OUTER_INLET
        if abs(r - self.radius_a) <= tol:
            return Segment.WALL
        if abs(z - self.length_L) <= tol:
            return Segment.OUTLET
        if abs(r) <= tol:
            return Segment.AXIS
        return Segment.INTERIOR


def make_grid(n_z: int, n_r: int, length_L: float, radius_a: float) -> Grid:
    return Grid(int(n_z), int(n_r), float(length_L), float(radius_a))


@dataclass(frozen=True)
class Params:
    """Dimensionless groups and scheme constants.

    radicand_offset_B = None means "pick a safe value for the grid", see
    `resolve_params`.
    """
    reynolds: float = 0.01
    capillary: float = 0.04
    cahn: float = 0.1
    diffusion: float = 0.05
    density_ratio: float = 10.0
    viscosity_ratio: float = 1.0
    flow_ratio: float = 10.0
    stabilizer_s: float = 1.0
    radicand_offset_B: float | None = None
    radicand_offset_G: float = 1e4
    ode_damping: float = 1e-3
    dt: float = 1.37e-3
    bond: float = 0.0
    end_time: float = 13.0
    gravity_mode: str = "capillary"
    gravity_g: float = 1.0
    sigma_coef: float | None = None
    penalty_chi: float | None = None

    def __post_init__(self):
        positive = ("reynolds", "capillary", "cahn", "diffusion", "dt",
                    "density_ratio", "viscosity_ratio", "radicand_offset_G")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.ode_damping < 0:
            raise ConfigurationError("ode_damping must be non-negative")
        if self.stabilizer_s < 0:
            raise ConfigurationError("stabilizer_s must be non-negative")
        if self.bond < 0:
            raise ConfigurationError("bond must be non-negative")
        if self.flow_ratio < 0:
            raise ConfigurationError("flow_ratio must be non-negative")
        if self.end_time < 0:
            raise ConfigurationError("end_time must be non-negative")
        if self.radicand_offset_B is not None and not self.radicand_offset_B > 0:
            raise ConfigurationError("radicand_offset_B must be positive")
        if self.gravity_mode not in ("capillary", "density"):
            raise ConfigurationError(f"unknown gravity_mode {self.gravity_mode!r}")
        sigma = 3.0 / (2.0 * math.sqrt(2.0) * self.capillary)
        if self.sigma_coef is None:
            object.__setattr__(self, "sigma_coef", sigma)
        elif not math.isclose(self.sigma_coef, sigma, rel_tol=1e-12):
            raise ConfigurationError(
                f"sigma_coef={self.sigma_coef} inconsistent with capillary={self.capillary}")
        chi = 0.5 * min(1.0, self.density_ratio)
        if self.penalty_chi is None:
            object.__setattr__(self, "penalty_chi", chi)
        elif not math.isclose(self.penalty_chi, chi, rel_tol=1e-12):
            raise ConfigurationError("penalty_chi must equal min(1, density_ratio)/2")

    def derived_free(self) -> dict:
        """Field values without the derived constants (for replace/serialise)."""
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out.pop("sigma_coef")
        out.pop("penalty_chi")
        return out

    def updated(self, **changes) -> "Params":
        base = self.derived_free()
        base.update(changes)
        return Params(**base)

    @property
    def gravity_on(self) -> bool:
        return self.bond > 0


def default_radicand_B(grid: Grid, params: Params) -> float:
    # min of F(phi) - s phi^2/2 is -(s/2 + s^2/4), reached at phi^2 = 1 + s
    s = params.stabilizer_s
    depth = 0.5 * s + 0.25 * s * s
    measure = grid.integrate_r(np.ones(grid.shape))
    return depth * measure + 1.0


def resolve_params(grid: Grid, params: Params) -> Params:
    if params.radicand_offset_B is not None:
        return params
    B = default_radicand_B(grid, params)
    logger.debug("radicand_offset_B defaulted to %g", B)
    return params.updated(radicand_offset_B=B)


def interpolate_material(phi_value, ratio: float):
    """(1 - p)/2 + ratio (1 + p)/2 with p = phi clipped to [-1, 1]."""
    if not ratio > 0:
        raise ConfigurationError("material ratio must be positive")
    p = np.clip(phi_value, -1.0, 1.0)
    out = 0.5 * (1.0 - p) + ratio * 0.5 * (1.0 + p)
    return float(out) if np.ndim(out) == 0 else out


def density(phi, params: Params):
    return interpolate_material(phi, params.density_ratio)


def viscosity(phi, params: Params):
    return interpolate_material(phi, params.viscosity_ratio)


def inflow_profile(r, flow_ratio: float, radius_a: float):
    """Axial inlet velocity: parabolic inside the nozzle, annular Poiseuille outside."""
    r_arr = np.asarray(r, dtype=float)
    a = float(radius_a)
    if np.any(r_arr < 0) or np.any(r_arr > a * (1 + 1e-12)):
        raise ConfigurationError(f"inlet radius outside [0, {a}]")
    la = math.log(a)
    k = (1.0 - 1.0 / a**2) / la
    denom = 1.0 - 1.0 / a**4 - (1.0 - 1.0 / a**2) ** 2 / la
    with np.errstate(divide="ignore"):
        log_term = np.where(r_arr > 0, np.log(np.maximum(r_arr, 1e-300) / a), 0.0)
    annular = 2.0 * flow_ratio / a**2 * (1.0 - (r_arr / a) ** 2 + k * log_term) / denom
    out = np.where(r_arr < 1.0, 2.0 * (1.0 - r_arr**2), annular)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class InletData:
    """Dirichlet values on the z = 0 faces, indexed by radial cell j."""
    phi: np.ndarray
    vz: np.ndarray

    @staticmethod
    def build(grid: Grid, params: Params) -> "InletData":
        inner = grid.inner_inlet
        phi = np.where(inner, -1.0, 1.0)
        vz = inflow_profile(grid.r, params.flow_ratio, grid.radius_a)
        return InletData(phi=phi, vz=np.asarray(vz, dtype=float))


def double_well(phi):
    return 0.25 * (phi**2 - 1.0) ** 2


@dataclass
class State:
    phi: np.ndarray
    mu: np.ndarray
    v_z: np.ndarray
    v_r: np.ndarray
    p: np.ndarray
    p_prev: np.ndarray
    U_scalar: float
    Q_scalar: float = 1.0
    R_scalar: float = 1.0
    T_scalar: float = 1.0
    K_scalar: float = 100.0
    S_accum: float = 1e4
    step_index: int = 0
    time: float = 0.0

    FIELD_NAMES = ("phi", "mu", "v_z", "v_r", "p", "p_prev")
    SCALAR_NAMES = ("U_scalar", "Q_scalar", "R_scalar", "T_scalar", "K_scalar", "S_accum")

    def copy(self) -> "State":
        return replace(self, **{k: getattr(self, k).copy() for k in self.FIELD_NAMES})


def sav_radicand(phi: np.ndarray, grid: Grid, params: Params) -> float:
    s = params.stabilizer_s
    return grid.integrate_r(double_well(phi) - 0.5 * s * phi**2) + params.radicand_offset_B


def initial_state(grid: Grid, params: Params) -> State:
    params = resolve_params(grid, params)
    phi = np.ones(grid.shape)
    zeros = np.zeros(grid.shape)
    rad = sav_radicand(phi, grid, params)
    if rad <= 0:
        raise ConfigurationError(
            f"SAV radicand {rad:g} is not positive; increase radicand_offset_B")
    G = params.radicand_offset_G
    return State(phi=phi, mu=zeros.copy(), v_z=zeros.copy(), v_r=zeros.copy(),
                 p=zeros.copy(), p_prev=zeros.copy(), U_scalar=math.sqrt(rad),
                 K_scalar=math.sqrt(G), S_accum=G)
