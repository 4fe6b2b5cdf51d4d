"""Axisymmetric two-phase jet and droplet formation with a decoupled,
energy-stable phase-field flow solver."""
from .domain import (ConfigurationError, Grid, InletData, Params, SolvabilityError, State,
                     initial_state, make_grid, resolve_params)
from .linsolve import SolverConfig, SolverError, Systems
from .ch_step import solve_step1
from .momentum_step import compute_K_functional, solve_step2
from .pressure_step import divergence_norm, solve_step3
from .diagnostics import (BoundaryWorkTracker, DiagnosticsRecord, droplet_metrics,
                          energy_breakdown, energy_modified, energy_offset, energy_original,
                          scalar_drift)
from .harness import (BASELINE, GRAVITY, Scenario, Simulation, converge_space, converge_time,
                      preset, run, sweep)

__version__ = "0.1.0"

__all__ = [
    "BASELINE", "GRAVITY", "BoundaryWorkTracker", "ConfigurationError", "DiagnosticsRecord",
    "Grid", "InletData", "Params", "Scenario", "Simulation", "SolvabilityError", "SolverConfig",
    "SolverError", "State", "Systems", "compute_K_functional", "converge_space", "converge_time",
    "divergence_norm", "droplet_metrics", "energy_breakdown", "energy_modified", "energy_offset",
    "energy_original", "initial_state", "make_grid", "preset", "resolve_params", "run",
    "scalar_drift", "solve_step1", "solve_step2", "solve_step3", "sweep",
]
