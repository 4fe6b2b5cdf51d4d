"""Time loop, scenario presets, convergence studies and parameter sweeps."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .domain import (ConfigurationError, Grid, InletData, Params, SolvabilityError, State,
                     initial_state, make_grid, resolve_params)
from .ch_step import solve_step1
from .momentum_step import solve_step2
from .pressure_step import divergence_norm, solve_step3
from .diagnostics import (BoundaryWorkTracker, DiagnosticsRecord, droplet_metrics,
                          energy_modified, energy_original)
from .linsolve import SolverConfig, Systems
from . import io as dio

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
    name: str = "baseline"
    params: Params = field(default_factory=Params)
    n_z: int = 200
    n_r: int = 30
    length_L: float = 20.0
    radius_a: float = 3.0
    output_every: int = 0          # VTK cadence in steps; 0 disables snapshots
    metrics_every: int = 1         # droplet metrics cadence in steps
    stop_at_pinch: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)

    def grid(self) -> Grid:
        return make_grid(self.n_z, self.n_r, self.length_L, self.radius_a)

    def with_params(self, **changes) -> "Scenario":
        return replace(self, params=self.params.updated(**changes))

    def updated(self, **changes) -> "Scenario":
        """Change grid/cadence fields and Params fields in one call."""
        own = {k: v for k, v in changes.items() if k in Scenario.__dataclass_fields__}
        rest = {k: v for k, v in changes.items() if k not in own}
        sc = replace(self, **own)
        return sc.with_params(**rest) if rest else sc

    @property
    def n_steps(self) -> int:
        return int(round(self.params.end_time / self.params.dt))

    def fingerprint(self) -> str:
        payload = {"params": self.params.derived_free(), "n_z": self.n_z, "n_r": self.n_r,
                   "length_L": self.length_L, "radius_a": self.radius_a}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


# presets ---------------------------------------------------------------------

BASELINE = Scenario()

GRAVITY = Scenario(
    name="gravity", radius_a=4.0, n_r=40,
    params=Params(flow_ratio=0.0, diffusion=0.156, density_ratio=1.2048, viscosity_ratio=0.1123,
                  reynolds=1.5461, capillary=0.006986, bond=1.5776, dt=2.67e-4,
                  ode_damping=1e-5, gravity_g=10.0, gravity_mode="density"))

SWEEP_DT = 2.67e-3
# the pumped sweeps spend far more boundary work than the baseline; 1e4 runs dry by t ~ 5
SWEEP_G = 1e6

# parameter -> (values, per-value overrides, shared settings)
SWEEPS: dict[str, tuple[tuple[float, ...], tuple[dict, ...], dict]] = {
    "reynolds": ((0.1, 1.0, 40.0),
                 ({"ode_damping": 1e-3}, {"ode_damping": 1e-3}, {"ode_damping": 1e-4}),
                 dict(diffusion=0.05, density_ratio=0.1, viscosity_ratio=10.0, capillary=0.01)),
    "capillary": ((0.01, 0.03, 0.07), ({}, {}, {}),
                  dict(diffusion=0.05, density_ratio=0.1, viscosity_ratio=1.0, reynolds=0.01,
                       ode_damping=1e-4, dt=2.67e-4)),
    "viscosity_ratio": ((0.01, 0.5, 20.0),
                        ({"ode_damping": 1e-3}, {"ode_damping": 1e-4}, {"ode_damping": 1e-3}),
                        dict(diffusion=0.05, density_ratio=0.1, reynolds=1.0, capillary=0.01)),
    "density_ratio": ((0.5, 0.8, 1.0),
                      ({"ode_damping": 1e-4}, {"ode_damping": 1e-5}, {"ode_damping": 1e-5}),
                      dict(diffusion=0.05, viscosity_ratio=0.1, reynolds=0.1, capillary=0.01, dt=2.67e-4)),
    "diffusion": ((0.001, 0.01, 0.1, 1.0), ({},) * 4,
                  dict(density_ratio=10.0, viscosity_ratio=10.0, capillary=0.01, reynolds=1.0,
                       ode_damping=1e-3)),
    "bond": ((0.001, 0.01, 0.1, 1.0), ({},) * 4,
             dict(diffusion=0.05, density_ratio=0.1, viscosity_ratio=1.0, capillary=0.01,
                  reynolds=1.0, ode_damping=1e-3, gravity_g=10.0)),
}

SWEEP_ALIASES = {"Re": "reynolds", "Ca": "capillary", "lambda_eta": "viscosity_ratio",
                 "lambda_rho": "density_ratio", "L_d": "diffusion", "Bo": "bond"}


def sweep_scenario(parameter: str, value: float, base: Scenario = BASELINE) -> Scenario:
    """Scenario for one sweep point, with the shared settings of that sweep."""
    parameter = SWEEP_ALIASES.get(parameter, parameter)
    if parameter not in SWEEPS:
        raise ConfigurationError(f"no sweep defined for {parameter!r}")
    values, per_value, shared = SWEEPS[parameter]
    changes = {"dt": SWEEP_DT, "radicand_offset_G": SWEEP_G, **shared}
    for v, extra in zip(values, per_value):
        if math.isclose(v, value):
            changes.update(extra)
    changes[parameter] = value
    return replace(base, name=f"{parameter}={value:g}", params=base.params.updated(**changes))


PRESETS = {"baseline": BASELINE, "gravity": GRAVITY}


def preset(name: str) -> Scenario:
    if name in PRESETS:
        return PRESETS[name]
    if "=" in name:
        key, val = name.split("=", 1)
        return sweep_scenario(key, float(val))
    raise ConfigurationError(f"unknown preset {name!r}")


# time loop -------------------------------------------------------------------

@dataclass
class StepAudit:
    """Smallest value each positivity check reached over a run."""
    U_denominator: float = math.inf
    Q_denominator: float = math.inf
    R_denominator: float = math.inf
    T_denominator: float = math.inf
    S_accum: float = math.inf
    steps: int = 0

    def update(self, ch, mom, pr, state: State) -> None:
        self.U_denominator = min(self.U_denominator, ch.U_denominator)
        self.Q_denominator = min(self.Q_denominator, ch.Q_denominator)
        self.R_denominator = min(self.R_denominator, mom.R_denominator)
        self.T_denominator = min(self.T_denominator, pr.T_denominator)
        self.S_accum = min(self.S_accum, state.S_accum)
        self.steps += 1

    def all_positive(self) -> bool:
        return all(v > 0 for v in (self.U_denominator, self.Q_denominator, self.R_denominator,
                                   self.T_denominator, self.S_accum))


@dataclass
class RunResult:
    scenario: Scenario
    state: State
    records: list
    audit: StepAudit
    tracker: BoundaryWorkTracker
    radius_max: float           # largest attached radius before the first detachment
    pinched: bool
    pinch_time: float | None
    snapshots: list = field(default_factory=list)


class Simulation:
    """Owns the state of one run and advances it step by step."""

    def __init__(self, scenario: Scenario, checkpoint: dio.Checkpoint | None = None):
        self.scenario = scenario
        self.grid = scenario.grid()
        self.params = resolve_params(self.grid, scenario.params)
        self.inlet = InletData.build(self.grid, self.params)
        self.systems = Systems.build(self.grid, self.params, scenario.solver)
        self.audit = StepAudit()
        if checkpoint is None:
            self.state = initial_state(self.grid, self.params)
            self.tracker = BoundaryWorkTracker()
            self.tracker.update(self.state, self.grid, self.params, self.inlet, self.params.dt)
            self.radius_max, self.pinched = 0.0, False
        else:
            # end_time may differ: a restart usually continues past the saved run
            mine = self.params.updated(end_time=checkpoint.params.end_time)
            if checkpoint.grid != self.grid or checkpoint.params.derived_free() != mine.derived_free():
                raise ConfigurationError("checkpoint does not match the scenario")
            self.state = checkpoint.state.copy()
            self.tracker = replace(checkpoint.tracker)
            self.radius_max, self.pinched = checkpoint.radius_max, checkpoint.pinched
        self.pinch_time = None
        self.ch_checksum = self.systems.ch_block.checksum()
        self.pressure_checksum = self.systems.pressure.checksum()
        self._update_droplet()

    def _update_droplet(self) -> None:
        radius, pinch = droplet_metrics(self.state.phi, self.grid)
        if pinch and not self.pinched:
            self.pinched = True
            self.pinch_time = self.state.time
        if not self.pinched:
            self.radius_max = max(self.radius_max, radius)
        self.radius = radius

    def step(self):
        s0 = self.state
        try:
            s1, ch = solve_step1(s0, self.systems, self.grid, self.params, self.inlet)
            s2, mom = solve_step2(s1, ch, self.grid, self.params, self.systems, self.inlet)
            s3, pr = solve_step3(s2, self.systems, self.grid, self.params, self.inlet)
        except SolvabilityError as exc:
            if exc.step is None:
                exc.step = s0.step_index
            raise
        s3.step_index = s0.step_index + 1
        s3.time = s3.step_index * self.params.dt
        self.state = s3
        self.audit.update(ch, mom, pr, s3)
        self.tracker.update(s3, self.grid, self.params, self.inlet, self.params.dt)
        if s3.step_index % max(self.scenario.metrics_every, 1) == 0:
            self._update_droplet()
        return ch, mom, pr

    def record(self) -> DiagnosticsRecord:
        s = self.state
        return DiagnosticsRecord(
            step=s.step_index, time=s.time,
            E_O=energy_original(s, self.tracker, self.grid, self.params, self.inlet),
            E_M=energy_modified(s, self.grid, self.params, self.inlet),
            Q=s.Q_scalar, R=s.R_scalar, T=s.T_scalar, U=s.U_scalar, K=s.K_scalar, S=s.S_accum,
            divnorm=divergence_norm(s, self.grid, self.inlet),
            Rd=self.radius_max, pinch=self.pinched)

    def checkpoint(self) -> dio.Checkpoint:
        return dio.Checkpoint(self.grid, self.params, self.state.copy(), replace(self.tracker),
                              self.radius_max, self.pinched)


def run(scenario: Scenario, out_dir: str | Path | None = None,
        checkpoint: dio.Checkpoint | None = None, n_steps: int | None = None,
        on_step: Callable[[Simulation], None] | None = None) -> RunResult:
    """Advance from t = 0 (or a checkpoint) to end_time, or by n_steps if given."""
    sim = Simulation(scenario, checkpoint)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    records = [sim.record()]
    snapshots = []

    def snapshot():
        if out is not None and scenario.output_every > 0 and sim.state.step_index % scenario.output_every == 0:
            path = out / f"snap_{sim.state.step_index}.vtk"
            dio.write_vtk(sim.state, sim.grid, path)
            snapshots.append(path)

    snapshot()
    target = scenario.n_steps if n_steps is None else sim.state.step_index + n_steps
    while sim.state.step_index < target:
        try:
            sim.step()
        except Exception:
            if out is not None:
                dump = out / f"failed_step_{sim.state.step_index}.bin"
                dio.save_checkpoint(dump, sim.checkpoint())
                logger.error("step %d failed; state saved to %s", sim.state.step_index, dump)
            raise
        records.append(sim.record())
        snapshot()
        if on_step is not None:
            on_step(sim)
        if scenario.stop_at_pinch and sim.pinched:
            break
    if out is not None:
        dio.write_diagnostics(records, out / "diag.csv")
        dio.save_checkpoint(out / "checkpoint.bin", sim.checkpoint())
    return RunResult(scenario, sim.state, records, sim.audit, sim.tracker, sim.radius_max,
                     sim.pinched, sim.pinch_time, snapshots)


# convergence -----------------------------------------------------------------

@dataclass
class ConvergenceReport:
    variable_names: tuple[str, ...]
    levels: tuple[float, ...]                  # h or dt per level, coarse to fine
    errors: dict[str, list[float]]
    orders: dict[str, float]                   # least-squares slope of log e against log h
    pairwise: dict[str, list[float]]           # log2(e_{2h} / e_h)
    threshold: float
    notes: list[str] = field(default_factory=list)

    def passed(self, names: Iterable[str] | None = None) -> bool:
        names = self.variable_names if names is None else names
        return all(not np.isfinite(self.orders[k]) or self.orders[k] >= self.threshold for k in names)

    def table(self) -> str:
        head = "level".ljust(12) + "".join(k.rjust(14) for k in self.variable_names)
        rows = [head]
        for i, h in enumerate(self.levels):
            rows.append(f"{h:<12.4g}" + "".join(f"{self.errors[k][i]:14.4e}" for k in self.variable_names))
        rows.append("order".ljust(12) + "".join(f"{self.orders[k]:14.3f}" for k in self.variable_names))
        return "\n".join(rows)


def fitted_order(levels: Sequence[float], errors: Sequence[float]) -> float:
    e = np.asarray(errors, dtype=float)
    h = np.asarray(levels, dtype=float)
    if np.any(e <= 0):
        return math.nan
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)


def restrict(fine: np.ndarray, factor: int) -> np.ndarray:
    """Average factor x factor blocks of cells onto the coarse grid."""
    nz, nr = fine.shape
    if nz % factor or nr % factor:
        raise ConfigurationError("grids are not nested")
    return fine.reshape(nz // factor, factor, nr // factor, factor).mean(axis=(1, 3))


def weighted_l2(diff: np.ndarray, grid: Grid) -> float:
    return math.sqrt(float(np.sum(diff**2 * grid.rc)) * grid.area)


def _refinement_factor(coarse: float, fine: float) -> int:
    ratio = coarse / fine
    k = int(round(ratio))
    if abs(ratio - k) > 1e-9 * ratio or k < 1 or (k & (k - 1)):
        raise ConfigurationError(f"h={fine:g} does not refine h={coarse:g} by a power of two")
    return k


def _build_report(names, levels, errors, threshold, notes) -> ConvergenceReport:
    orders, pairwise = {}, {}
    for k in names:
        e = errors[k]
        if all(v == 0 for v in e):
            orders[k] = math.nan
            notes.append(f"{k}: zero error at every level, order undefined")
        else:
            orders[k] = fitted_order(levels, e)
        pairwise[k] = [math.log2(a / b) if a > 0 and b > 0 else math.nan for a, b in zip(e[:-1], e[1:])]
    return ConvergenceReport(tuple(names), tuple(levels), errors, orders, pairwise, threshold, notes)


SPACE_FIELDS = ("phi", "v_z", "v_r", "p")


def converge_space(base: Scenario, levels: Sequence[float] = (1 / 10, 1 / 20, 1 / 40),
                   reference: float = 1 / 80, end_time: float = 0.2, dt: float = 1e-5,
                   threshold: float = 1.7, runner: Callable[[Scenario], State] | None = None) -> ConvergenceReport:
    """Grid refinement with a fixed time step; errors against a fine reference run."""
    runner = runner or (lambda sc: run(sc).state)
    levels = sorted(levels, reverse=True)

    def scenario_for(h):
        n_z = int(round(base.length_L / h))
        n_r = int(round(base.radius_a / h))
        if not (math.isclose(n_z * h, base.length_L) and math.isclose(n_r * h, base.radius_a)):
            raise ConfigurationError(f"h={h:g} does not divide the domain")
        return replace(base, n_z=n_z, n_r=n_r, output_every=0,
                       params=base.params.updated(dt=dt, end_time=end_time))

    for h in levels:
        _refinement_factor(h, reference)
    ref_state = runner(scenario_for(reference))
    errors = {k: [] for k in SPACE_FIELDS}
    notes = []
    for h in levels:
        sc = scenario_for(h)
        st = runner(sc) if not math.isclose(h, reference) else ref_state
        factor = _refinement_factor(h, reference)
        grid = sc.grid()
        for k in SPACE_FIELDS:
            errors[k].append(weighted_l2(getattr(st, k) - restrict(getattr(ref_state, k), factor), grid))
    return _build_report(SPACE_FIELDS, levels, errors, threshold, notes)


TIME_FIELDS = ("phi", "u", "p", "U", "K")


def converge_time(base: Scenario, steps: Sequence[float] = (4e-4, 2e-4, 1e-4, 5e-5),
                  reference: float = 1e-5, end_time: float = 0.2, threshold: float = 0.85,
                  runner: Callable[[Scenario], State] | None = None) -> ConvergenceReport:
    """Time-step halving on a fixed grid; errors against a small-step reference run."""
    runner = runner or (lambda sc: run(sc).state)
    steps = sorted(steps, reverse=True)
    if not all(reference < dt for dt in steps):
        raise ConfigurationError("the reference step must be smaller than every tested step")

    def scenario_for(dt):
        return replace(base, output_every=0, params=base.params.updated(dt=dt, end_time=end_time))

    ref = runner(scenario_for(reference))
    grid = base.grid()
    names = TIME_FIELDS + ("Q-1", "R-1", "T-1")
    errors = {k: [] for k in names}
    for dt in steps:
        st = runner(scenario_for(dt))
        errors["phi"].append(weighted_l2(st.phi - ref.phi, grid))
        errors["u"].append(math.hypot(weighted_l2(st.v_z - ref.v_z, grid), weighted_l2(st.v_r - ref.v_r, grid)))
        errors["p"].append(weighted_l2(st.p - ref.p, grid))
        errors["U"].append(abs(st.U_scalar - ref.U_scalar))
        errors["K"].append(abs(st.K_scalar - ref.K_scalar))
        errors["Q-1"].append(abs(st.Q_scalar - 1.0))
        errors["R-1"].append(abs(st.R_scalar - 1.0))
        errors["T-1"].append(abs(st.T_scalar - 1.0))
    return _build_report(names, steps, errors, threshold, [])


# sweeps ----------------------------------------------------------------------

@dataclass
class SweepRow:
    value: float
    radius: float
    pinch_time: float | None

    @property
    def censored(self) -> bool:
        return self.pinch_time is None


@dataclass
class SweepTable:
    parameter: str
    rows: list[SweepRow]

    def verdict(self) -> str:
        usable = [r for r in self.rows if not r.censored]
        if len(self.rows) <= 1:
            return "trivial"
        if len(usable) < 2:
            return "insufficient"
        radii = [r.radius for r in sorted(usable, key=lambda r: r.value)]
        d = np.diff(radii)
        if np.all(d > 0):
            return "increasing"
        if np.all(d < 0):
            return "decreasing"
        return "non-monotone"


def sweep(parameter: str, values: Sequence[float], base: Scenario = BASELINE,
          runner: Callable[[Scenario], RunResult] | None = None) -> SweepTable:
    """Run each value until the first detachment and tabulate the radius reached."""
    parameter = SWEEP_ALIASES.get(parameter, parameter)
    if parameter not in SWEEPS:
        raise ConfigurationError(f"sweep parameter must be one of {sorted(SWEEPS)}")
    runner = runner or run
    rows = []
    for v in values:
        sc = replace(sweep_scenario(parameter, v, base), stop_at_pinch=True)
        res = runner(sc)
        rows.append(SweepRow(v, res.radius_max, res.pinch_time))
        logger.info("%s=%g: R_d=%.4f pinch=%s", parameter, v, res.radius_max, res.pinch_time)
    return SweepTable(parameter, rows)
