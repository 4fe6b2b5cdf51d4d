import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dropform import ops
from dropform.domain import InletData, Params, initial_state, make_grid, resolve_params
from dropform.linsolve import Systems
from dropform.pressure_step import divergence_norm, integrated_divergence, solve_step3


def setup(n_z=12, n_r=6, L=4.0, a=1.5, **changes):
    g = make_grid(n_z, n_r, L, a)
    p = resolve_params(g, Params(**changes))
    return g, p, Systems.build(g, p), InletData.build(g, p)


def stirred(g, p, rng):
    s = initial_state(g, p)
    Z, R = g.mesh()
    s.v_z = np.cos(Z) * (g.radius_a - R) + 0.1 * rng.standard_normal(g.shape)
    s.v_r = np.sin(Z) * R * (g.radius_a - R)
    s.p = rng.standard_normal(g.shape)
    return s


@given(st.floats(0.0, 20.0), st.floats(0.5, 1.5), st.data())
def test_solenoidal_velocity_is_a_fixed_point(q_r, T, data):
    g = make_grid(10, 5, 3.0, 1.5)
    p = resolve_params(g, Params(flow_ratio=q_r))
    systems = Systems.build(g, p)
    inlet = InletData.build(g, p)
    s = initial_state(g, p)
    # plug flow carrying the inlet profile down the pipe has zero discrete divergence
    s.v_z = np.tile(inlet.vz, (g.n_z, 1))
    s.p = data.draw(arrays(np.float64, g.shape, elements=st.floats(-5, 5)))
    s.T_scalar = T
    assert np.max(np.abs(integrated_divergence(s, g, inlet))) <= 1e-12 * (1 + q_r)
    new, split = solve_step3(s, systems, g, p, inlet)
    assert np.max(np.abs(split.p2)) <= 1e-9 * (1 + q_r)
    np.testing.assert_allclose(new.p, s.p, atol=1e-9 * (1 + q_r))
    assert new.T_scalar == pytest.approx(T, abs=1e-12)
    np.testing.assert_array_equal(new.p_prev, s.p)


def test_penalty_identity_and_T_reconstruction(rng):
    g, p, systems, inlet = setup()
    s = stirred(g, p, rng)
    new, split = solve_step3(s, systems, g, p, inlet)
    st_ = ops.stencils(g)
    grad_energy = st_.face_energy(ops.extend(split.p2, g, ops.pressure_bc()))
    coef = p.ode_damping * p.dt / (p.penalty_chi * p.reynolds)
    expected = 1 / p.dt + coef * grad_energy
    assert split.T_denominator == pytest.approx(expected, rel=1e-11)
    div = integrated_divergence(s, g, inlet)
    lhs = (new.T_scalar - s.T_scalar) / p.dt
    rhs = p.ode_damping * np.sum(div * new.p)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(new.p, s.p + new.T_scalar * split.p2, atol=1e-14)


def test_frozen_damping_keeps_T(rng):
    g, p, systems, inlet = setup(ode_damping=0.0)
    s = stirred(g, p, rng)
    s.T_scalar = 0.97
    new, _ = solve_step3(s, systems, g, p, inlet)
    assert new.T_scalar == 0.97


def test_outlet_pins_the_pressure(rng):
    g, p, systems, inlet = setup()
    s = stirred(g, p, rng)
    s.p[:] = 0.0
    new, split = solve_step3(s, systems, g, p, inlet)
    # p2 solves a Poisson problem with p = 0 on the outlet: ghost = -p2 there
    ext = ops.extend(split.p2, g, ops.pressure_bc()).reshape(g.n_z + 2, g.n_r + 2)
    np.testing.assert_allclose(ext[-1, 1:-1] + ext[-2, 1:-1], 0.0, atol=1e-14)


def test_divergence_norm_matches_the_operator(rng):
    g, p, _, inlet = setup()
    s = stirred(g, p, rng)
    d = ops.div_r(s.v_z, s.v_r, g, ops.axial_velocity_bc(inlet), ops.radial_velocity_bc())
    assert divergence_norm(s, g, inlet) == pytest.approx(np.max(np.abs(d)), rel=1e-13)
