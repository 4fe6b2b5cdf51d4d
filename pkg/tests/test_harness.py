import math
import struct
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dropform import io as dio
from dropform.cli import main
from dropform.config import apply_pairs, load_scenario, parse_pairs
from dropform.diagnostics import BoundaryWorkTracker
from dropform.domain import ConfigurationError, Params, State, initial_state, make_grid
from dropform.harness import (BASELINE, GRAVITY, SWEEPS, Scenario, Simulation, SweepRow, SweepTable,
                              converge_space, converge_time, fitted_order, preset, restrict, run,
                              sweep, sweep_scenario)

TINY = replace(BASELINE, name="tiny", n_z=20, n_r=6, length_L=4.0, radius_a=1.5,
               params=BASELINE.params.updated(end_time=5 * 1.37e-3))


# presets ------------------------------------------------------------------------

def test_baseline_preset_matches_the_reference_parameter_list():
    p = BASELINE.params
    assert (BASELINE.n_z, BASELINE.n_r, BASELINE.length_L, BASELINE.radius_a) == (200, 30, 20.0, 3.0)
    assert (p.cahn, p.dt, p.flow_ratio, p.ode_damping, p.diffusion) == (0.1, 1.37e-3, 10.0, 1e-3, 0.05)
    assert (p.density_ratio, p.viscosity_ratio, p.reynolds, p.capillary) == (10.0, 1.0, 0.01, 0.04)
    assert p.bond == 0.0
    assert BASELINE.fingerprint() == "013f280bb7cc55e1db447106c1ac12f84012535f79062eccd3efaf2fddb885ba"


def test_gravity_preset():
    p = GRAVITY.params
    assert GRAVITY.radius_a == 4.0 and p.flow_ratio == 0.0 and p.gravity_mode == "density"
    assert p.gravity_on and p.dt == 2.67e-4
    assert GRAVITY.fingerprint() == "7349fba663530c00aa8c3507c9dff49ef700bd7d80a9157db921f1a10e6c37c4"


def test_sweep_points_carry_their_settings():
    ca = sweep_scenario("Ca", 0.03)
    assert ca.params.capillary == 0.03 and ca.params.dt == 2.67e-4 and ca.params.density_ratio == 0.1
    re = sweep_scenario("reynolds", 40.0)
    assert re.params.dt == 2.67e-3 and re.params.ode_damping == 1e-4
    rho = sweep_scenario("lambda_rho", 0.8)
    assert rho.params.ode_damping == 1e-5 and rho.params.penalty_chi == pytest.approx(0.4)
    assert sweep_scenario("Bo", 0.1).params.gravity_on
    assert preset("Ca=0.07").params.capillary == 0.07
    with pytest.raises(ConfigurationError):
        sweep_scenario("cahn", 0.1)
    with pytest.raises(ConfigurationError):
        preset("nonsense")
    assert set(SWEEPS) == {"reynolds", "capillary", "viscosity_ratio", "density_ratio", "diffusion", "bond"}


def test_scenario_updates_split_grid_and_parameters():
    sc = BASELINE.updated(n_z=50, reynolds=2.0)
    assert sc.n_z == 50 and sc.params.reynolds == 2.0
    assert sc.params.capillary == BASELINE.params.capillary
    assert BASELINE.n_steps == round(13.0 / 1.37e-3)


# time loop ----------------------------------------------------------------------

def test_zero_end_time_returns_the_initial_state():
    res = run(TINY.updated(end_time=0.0))
    assert len(res.records) == 1
    init = initial_state(TINY.grid(), Simulation(TINY).params)
    np.testing.assert_array_equal(res.state.phi, init.phi)
    assert res.records[0].step == 0


def test_run_writes_outputs_and_is_deterministic(tmp_path):
    sc = replace(TINY, output_every=2)
    run(sc, tmp_path / "a")
    run(sc, tmp_path / "b")
    a = (tmp_path / "a" / "diag.csv").read_bytes()
    assert a == (tmp_path / "b" / "diag.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0] == "step,time,E_O,E_M,Q,R,T,U,K,S,divnorm,Rd,pinch"
    assert len(lines) == 1 + 6
    snaps = sorted(p.name for p in (tmp_path / "a").glob("snap_*.vtk"))
    assert snaps == ["snap_0.vtk", "snap_2.vtk", "snap_4.vtk"]
    vtk = (tmp_path / "a" / "snap_2.vtk").read_text().splitlines()
    assert vtk[0] == "# vtk DataFile Version 3.0" and vtk[3] == "DATASET STRUCTURED_GRID"
    assert vtk[4] == "DIMENSIONS 20 6 1"
    for name in ("phi", "mu", "p", "v_z", "v_r"):
        assert f"SCALARS {name} double 1" in vtk
    rows = dio.read_diagnostics(tmp_path / "a" / "diag.csv")
    assert rows[-1]["step"] == 5.0


def test_restart_reproduces_a_straight_run(tmp_path):
    straight = run(TINY.updated(end_time=6 * 1.37e-3))
    first = run(TINY.updated(end_time=3 * 1.37e-3), tmp_path)
    ckpt = dio.load_checkpoint(tmp_path / "checkpoint.bin")
    resumed = run(TINY.updated(end_time=6 * 1.37e-3), checkpoint=ckpt)
    assert first.state.step_index == 3 and resumed.state.step_index == 6
    for name in State.FIELD_NAMES:
        np.testing.assert_allclose(getattr(resumed.state, name), getattr(straight.state, name),
                                   rtol=0, atol=1e-12)
    for name in State.SCALAR_NAMES:
        assert getattr(resumed.state, name) == pytest.approx(getattr(straight.state, name), abs=1e-12)
    assert resumed.records[-1].E_O == pytest.approx(straight.records[-1].E_O, abs=1e-12)


def test_checkpoint_must_match_the_scenario(tmp_path):
    run(TINY, tmp_path)
    ckpt = dio.load_checkpoint(tmp_path / "checkpoint.bin")
    with pytest.raises(ConfigurationError):
        Simulation(TINY.updated(reynolds=1.0), ckpt)
    with pytest.raises(ConfigurationError):
        Simulation(replace(TINY, n_z=40), ckpt)


@given(st.data(), st.integers(1, 6), st.integers(1, 6))
def test_checkpoint_round_trip_is_exact(data, n_z, n_r):
    import tempfile
    from pathlib import Path
    g = make_grid(n_z, n_r, 2.5, 1.7)
    p = Params(reynolds=data.draw(st.floats(0.01, 10)), radicand_offset_B=5.0)
    fields = {k: data.draw(arrays(np.float64, g.shape, elements=st.floats(-1e6, 1e6)))
              for k in State.FIELD_NAMES}
    scalars = {k: data.draw(st.floats(-1e3, 1e3)) for k in State.SCALAR_NAMES}
    s = State(**fields, **scalars, step_index=data.draw(st.integers(0, 10**6)), time=0.5)
    last = data.draw(st.one_of(st.none(), st.floats(-10, 10)))
    ck = dio.Checkpoint(g, p, s, BoundaryWorkTracker(1.25, last), 0.75, data.draw(st.booleans()))
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "c.bin"
        dio.save_checkpoint(path, ck)
        back = dio.load_checkpoint(path)
    assert back.grid == g and back.params == p
    for k in State.FIELD_NAMES:
        np.testing.assert_array_equal(getattr(back.state, k), fields[k])
    for k in State.SCALAR_NAMES:
        assert getattr(back.state, k) == scalars[k]
    assert back.tracker == ck.tracker
    assert (back.radius_max, back.pinched) == (0.75, ck.pinched)


def test_checkpoint_layout_is_little_endian_and_versioned(tmp_path):
    run(TINY.updated(end_time=0.0), tmp_path)
    raw = (tmp_path / "checkpoint.bin").read_bytes()
    assert raw[:8] == b"DROPCHK\0"
    assert struct.unpack_from("<III", raw, 8) == (1, 20, 6)
    assert struct.unpack_from("<dd", raw, 20) == (4.0, 1.5)
    (tmp_path / "bad.bin").write_bytes(raw + b"\0")
    with pytest.raises(dio.CheckpointError):
        dio.load_checkpoint(tmp_path / "bad.bin")
    (tmp_path / "bad.bin").write_bytes(b"NOTACHK\0" + raw[8:])
    with pytest.raises(dio.CheckpointError):
        dio.load_checkpoint(tmp_path / "bad.bin")
    (tmp_path / "bad.bin").write_bytes(raw[:8] + struct.pack("<I", 9) + raw[12:])
    with pytest.raises(dio.CheckpointError):
        dio.load_checkpoint(tmp_path / "bad.bin")


def test_failed_step_saves_the_state(tmp_path):
    sc = TINY.updated(radicand_offset_G=1e-6)
    from dropform.domain import SolvabilityError
    with pytest.raises(SolvabilityError, match="step 0"):
        run(sc, tmp_path)
    assert (tmp_path / "failed_step_0.bin").exists()


def test_matched_fluids_stay_near_the_pure_phases():
    sc = BASELINE.updated(n_z=100, n_r=15, density_ratio=1.0, viscosity_ratio=1.0, end_time=300 * 1.37e-3)
    lo, hi = [math.inf], [-math.inf]

    def watch(sim):
        lo[0] = min(lo[0], float(sim.state.phi.min()))
        hi[0] = max(hi[0], float(sim.state.phi.max()))

    res = run(sc, on_step=watch)
    assert res.audit.all_positive()
    assert -1.1 <= lo[0] and hi[0] <= 1.1


def test_audit_tracks_the_positivity_checks():
    res = run(TINY)
    a = res.audit
    assert a.steps == 5 and a.all_positive()
    assert a.U_denominator >= 1 - 1e-8
    assert a.S_accum == min(r.S for r in res.records[1:])


# convergence helpers ------------------------------------------------------------

def test_fitted_order_and_restriction():
    h = [0.4, 0.2, 0.1]
    assert fitted_order(h, [1.6, 0.4, 0.1]) == pytest.approx(2.0)
    assert math.isnan(fitted_order(h, [1.0, 0.0, 0.0]))
    fine = np.arange(16.0).reshape(4, 4)
    np.testing.assert_array_equal(restrict(fine, 2), [[2.5, 4.5], [10.5, 12.5]])
    with pytest.raises(ConfigurationError):
        restrict(np.zeros((6, 4)), 4)


def _cheap(sc):
    return run(replace(sc, params=sc.params.updated(end_time=2 * sc.params.dt))).state


def test_space_study_on_identical_grids_is_a_pass_with_a_note():
    base = replace(BASELINE, length_L=2.0, radius_a=1.5)
    rep = converge_space(base, levels=[0.5], reference=0.5, dt=1e-3, runner=_cheap)
    assert all(e == [0.0] for e in rep.errors.values())
    assert rep.passed() and rep.notes


def test_space_study_rejects_non_nested_levels():
    base = replace(BASELINE, length_L=2.0, radius_a=1.5)
    with pytest.raises(ConfigurationError):
        converge_space(base, levels=[0.5], reference=0.5 / 3, runner=_cheap)
    with pytest.raises(ConfigurationError):
        converge_space(base, levels=[0.7], reference=0.35, runner=_cheap)


def test_time_study_requires_a_finer_reference():
    with pytest.raises(ConfigurationError):
        converge_time(TINY, steps=[1e-3, 5e-4], reference=5e-4, runner=_cheap)


def test_identical_time_steps_give_identical_outputs():
    a = run(TINY).state
    b = run(TINY).state
    for name in State.FIELD_NAMES:
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


# sweeps -------------------------------------------------------------------------

def test_sweep_verdicts():
    rows = lambda *pairs: [SweepRow(v, r, t) for v, r, t in pairs]
    assert SweepTable("x", rows((1, 2.0, 1.0))).verdict() == "trivial"
    assert SweepTable("x", rows((1, 2.0, 1.0), (2, 3.0, 1.0))).verdict() == "increasing"
    assert SweepTable("x", rows((2, 2.0, 1.0), (1, 3.0, 1.0))).verdict() == "decreasing"
    assert SweepTable("x", rows((1, 2.0, 1.0), (2, 3.0, 1.0), (3, 1.0, 1.0))).verdict() == "non-monotone"
    assert SweepTable("x", rows((1, 2.0, 1.0), (2, 3.0, None))).verdict() == "insufficient"
    censored = SweepTable("x", rows((1, 2.0, 1.0), (2, 9.0, None), (3, 3.0, 1.0)))
    assert censored.verdict() == "increasing"


def test_single_value_sweep_is_trivial():
    calls = []

    def runner(sc):
        calls.append(sc)
        return run(replace(sc, n_z=20, n_r=6, length_L=4.0, radius_a=1.5,
                           params=sc.params.updated(end_time=2 * sc.params.dt)))

    table = sweep("Ca", [0.03], runner=runner)
    assert len(table.rows) == 1 and table.verdict() == "trivial"
    assert calls[0].stop_at_pinch and calls[0].params.capillary == 0.03
    assert table.rows[0].censored
    with pytest.raises(ConfigurationError):
        sweep("cahn", [0.1])


# configuration and command line -------------------------------------------------

def test_config_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\npreset = Ca=0.03\nn_z = 40   # grid\nreynolds=2\n"
                   "stop_at_pinch = yes\nsolver.rtol = 1e-11\nradicand_offset_B = none\n")
    sc = load_scenario(cfg, ["end_time=0.5"])
    assert sc.params.capillary == 0.03 and sc.params.reynolds == 2.0 and sc.n_z == 40
    assert sc.stop_at_pinch and sc.solver.rtol == 1e-11 and sc.params.end_time == 0.5
    assert sc.params.radicand_offset_B is None
    with pytest.raises(ConfigurationError):
        apply_pairs([("unknown", "1")])
    with pytest.raises(ConfigurationError):
        apply_pairs([("n_z", "many")])
    with pytest.raises(ConfigurationError):
        parse_pairs(["novalue"])
    with pytest.raises(ConfigurationError):
        apply_pairs([("sigma_coef", "1")])
    with pytest.raises(ConfigurationError):
        apply_pairs([("solver.method", "magic")])


def test_cli_run_and_restart(tmp_path, capsys):
    common = ["--set", "n_z=20", "--set", "n_r=6", "--set", "length_L=4", "--set", "radius_a=1.5"]
    assert main(["run", *common, "--set", "end_time=0.00274", "--out", str(tmp_path / "a")]) == 0
    assert main(["run", *common, "--set", "end_time=0.00548", "--restart",
                 str(tmp_path / "a" / "checkpoint.bin"), "--out", str(tmp_path / "b")]) == 0
    assert main(["run", *common, "--set", "end_time=0.00548", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "b" / "checkpoint.bin").read_bytes() == (tmp_path / "c" / "checkpoint.bin").read_bytes()
    assert main(["run", "--set", "bogus=1", "--out", str(tmp_path / "d")]) == 2
    assert "unknown configuration key" in capsys.readouterr().err
