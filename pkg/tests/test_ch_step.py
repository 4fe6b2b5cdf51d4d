import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dropform import ops
from dropform.ch_step import compute_H, solve_step1
from dropform.domain import (InletData, Params, SolvabilityError, initial_state, make_grid,
                             resolve_params)
from dropform.linsolve import Systems


def setup(n_z=16, n_r=6, L=4.0, a=1.5, **changes):
    g = make_grid(n_z, n_r, L, a)
    p = resolve_params(g, Params(**changes))
    return g, p, Systems.build(g, p), InletData.build(g, p)


def stirred_state(g, p, rng, amplitude=0.3):
    s = initial_state(g, p)
    Z, R = g.mesh()
    s.phi = np.tanh((R - 0.8 - 0.2 * np.sin(Z)) / (np.sqrt(2) * p.cahn))
    s.mu = amplitude * rng.standard_normal(g.shape)
    s.v_z = amplitude * np.cos(Z) * (g.radius_a - R)
    s.v_r = amplitude * np.sin(Z) * R * (g.radius_a - R)
    return s


def test_H_examples():
    g = make_grid(200, 30, 20, 3)
    ones = np.ones(g.shape)
    np.testing.assert_allclose(compute_H(ones, g, Params(radicand_offset_B=100.0)), -1 / math.sqrt(55), rtol=1e-13)
    assert np.all(compute_H(ones, g, Params(stabilizer_s=0.0, radicand_offset_B=1.0)) == 0)
    g1 = make_grid(4, 4, 1.0, 2.0)
    assert np.all(compute_H(np.zeros(g1.shape), g1, Params(radicand_offset_B=1.0)) == 0)


def test_H_rejects_a_negative_radicand():
    g = make_grid(20, 6, 4.0, 1.5)
    with pytest.raises(SolvabilityError, match="radicand_offset_B"):
        compute_H(np.ones(g.shape), g, Params(radicand_offset_B=0.1))


def test_frozen_damping_keeps_Q(rng):
    g, p, systems, inlet = setup(ode_damping=0.0)
    s = stirred_state(g, p, rng)
    s.Q_scalar = 0.987654321
    new, _ = solve_step1(s, systems, g, p, inlet)
    assert new.Q_scalar == s.Q_scalar


def test_quiescent_flow_has_no_advective_part():
    g, p, systems, inlet = setup()
    s = initial_state(g, p)
    new, ch = solve_step1(s, systems, g, p, inlet)
    assert np.all(ch.phi21 == 0) and np.all(ch.mu21 == 0)
    assert ch.U2 == 0.0
    np.testing.assert_array_equal(new.phi, ch.phi11 + ch.U1 * ch.phi12)


def test_fourth_subproblem_aliases_the_second():
    g, p, systems, inlet = setup()
    _, ch = solve_step1(initial_state(g, p), systems, g, p, inlet)
    assert ch.phi22 is ch.phi12 and ch.mu22 is ch.mu12


def test_split_reconstruction_and_U_identity(rng):
    g, p, systems, inlet = setup()
    s = stirred_state(g, p, rng)
    new, ch = solve_step1(s, systems, g, p, inlet)
    Q = new.Q_scalar
    phi2 = ch.phi21 + ch.U2 * ch.phi12
    np.testing.assert_allclose(new.phi, ch.phi11 + ch.U1 * ch.phi12 + Q * phi2, atol=1e-12)
    assert new.U_scalar == pytest.approx(ch.U1 + Q * ch.U2, abs=1e-14)
    # the split U agrees with the unsplit relation U^{n+1} - U^n = (1/2) int r H (phi^{n+1} - phi^n)
    jump = 0.5 * np.sum(g.rc * ch.H_n * (new.phi - s.phi)) * g.area
    assert new.U_scalar - s.U_scalar == pytest.approx(jump, abs=1e-9 * max(1.0, abs(s.U_scalar)))


def test_U_denominator_is_at_least_one(rng):
    g, p, systems, inlet = setup()
    for _ in range(3):
        _, ch = solve_step1(stirred_state(g, p, rng), systems, g, p, inlet)
        assert ch.U_denominator >= 1 - 1e-8
        assert ch.Q_denominator > 0


def test_pure_phase_is_a_steady_state():
    g, p, systems, _ = setup()
    inlet = InletData(phi=np.ones(g.n_r), vz=np.zeros(g.n_r))
    s = initial_state(g, p)
    new, _ = solve_step1(s, systems, g, p, inlet)
    np.testing.assert_allclose(new.phi, 1.0, atol=1e-9)
    np.testing.assert_allclose(new.mu, 0.0, atol=1e-9)


@given(st.floats(0.1, 5.0))
def test_advective_response_is_linear_in_the_velocity(scale):
    rng = np.random.default_rng(7)
    g, p, systems, inlet = setup()
    s = stirred_state(g, p, rng)
    _, base = solve_step1(s, systems, g, p, inlet)
    s2 = replace(s, v_z=scale * s.v_z, v_r=scale * s.v_r)
    _, scaled = solve_step1(s2, systems, g, p, inlet)
    tol = 1e-10 * (1 + np.max(np.abs(base.phi21))) * scale
    np.testing.assert_allclose(scaled.phi21, scale * base.phi21, atol=tol)
    np.testing.assert_allclose(scaled.mu21, scale * base.mu21, atol=tol * 100)
    # the capillary predictor is linear in mu^n
    s3 = replace(s, mu=scale * s.mu)
    _, mu_scaled = solve_step1(s3, systems, g, p, inlet)
    np.testing.assert_allclose(mu_scaled.tilde_vz2, scale * base.tilde_vz2,
                               atol=1e-12 * scale * (1 + np.max(np.abs(base.tilde_vz2))))


def test_capillary_predictor_formula(rng):
    g, p, systems, inlet = setup()
    s = stirred_state(g, p, rng)
    _, ch = solve_step1(s, systems, g, p, inlet)
    gz, gr = ops.grad(s.phi, g, ops.phase_bc(inlet))
    rho = 0.5 * (1 - np.clip(s.phi, -1, 1)) + p.density_ratio * 0.5 * (1 + np.clip(s.phi, -1, 1))
    coef = p.dt * p.sigma_coef / (p.reynolds * rho) * s.mu
    np.testing.assert_allclose(ch.tilde_vz2, coef * gz, rtol=1e-13, atol=1e-300)
    np.testing.assert_allclose(ch.tilde_vr2, coef * gr, rtol=1e-13, atol=1e-300)


def test_first_step_of_the_standard_setup_keeps_Q_near_one():
    g = make_grid(200, 30, 20, 3)
    p = resolve_params(g, Params())
    new, ch = solve_step1(initial_state(g, p), Systems.build(g, p), g, p)
    assert abs(new.Q_scalar - 1) <= 0.05
    # frozen from the first step of the standard configuration
    assert new.U_scalar == pytest.approx(ch.U1, abs=0)
    assert ch.U_denominator >= 1.0
