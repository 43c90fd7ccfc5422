import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nemthsim import harness, solvers
from nemthsim.grid import build_grid, central_divergence, central_gradient, integrate
from nemthsim.state import State, kinetic_energy, velocity_divergence

seeds = st.integers(0, 2**31 - 1)


def random_state(seed, n=(12, 12), bc="periodic", eps=0.25, amp=0.5):
    init = harness.InitialSpec(u0="random" if bc == "periodic" else "cavity", u0_amp=amp, d0="random",
                               theta0="random", seed=seed)
    scen = harness.Scenario("t", (1.0,) * len(n), n, bc, initial=init, eps=eps, dt=1e-3, T_end=1e-3)
    return scen.initial_state(), scen


def test_step_params_validation():
    with pytest.raises(ValueError, match="dt must be positive"):
        solvers.StepParams(dt=0.0)
    with pytest.raises(ValueError, match="elastic_form"):
        solvers.StepParams(elastic_form="torque")
    with pytest.raises(ValueError, match="max_picard"):
        solvers.StepParams(max_picard=0)
    assert solvers.StepParams().stabilization(0.5) == pytest.approx(4.0)
    assert solvers.StepParams().stabilization("limit") == 0.0
    assert solvers.StepParams(S=2.0).stabilization(0.1) == 2.0


def test_upwind_picks_side_against_velocity():
    g = build_grid((4.0, 4.0), (4, 4))
    d = np.zeros((3, 4, 4))
    d[0] = np.arange(4.0)[:, None] ** 2
    w = np.zeros((2, 4, 4))
    w[0, :2] = 1.0
    w[0, 2:] = -1.0
    G = solvers.upwind_gradient(g, d, w)
    assert G[0, 0, 1, 0] == 1.0      # backward: 1 - 0
    assert G[0, 0, 2, 0] == 5.0      # forward: 9 - 4


@settings(max_examples=15, deadline=None)
@given(seeds, st.sampled_from([0.5, 0.25, "limit"]))
def test_director_maximum_principles(seed, eps):
    s, _ = random_state(seed, eps=eps)
    p = solvers.StepParams(dt=2e-3)
    w = s.u
    d = s.d
    for _ in range(5):
        d, _, _ = solvers.director_update(s.grid, d, w, s.eps, p)
        norm = np.sqrt(np.sum(d * d, axis=0))
        assert norm.max() <= 1 + 1e-12
        assert d[2].min() >= -1e-12
        if eps == "limit":
            assert np.allclose(norm, 1.0, atol=1e-13)


def test_director_step_condition_is_enforced():
    s, _ = random_state(1, amp=50.0)
    with pytest.raises(solvers.SchemeError, match="director step condition"):
        solvers.director_step(s, s.u, solvers.StepParams(dt=0.05))
    d = solvers.director_step(s, s.u, solvers.StepParams(dt=0.05, strict=False))
    assert np.all(np.isfinite(d))


def test_limit_director_step_returns_unit_vectors():
    s, _ = random_state(2, eps=0.25)
    d = solvers.limit_director_step(s, s.u, solvers.StepParams(dt=1e-3))
    assert np.allclose(np.sum(d * d, axis=0), 1.0)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_periodic_projection(seed):
    g = build_grid((1.0, 2.0), (8, 6))
    v = np.random.default_rng(seed).standard_normal((2, 8, 6))
    u, phi = solvers.project(v, g)
    assert np.max(np.abs(central_divergence(u, g))) < 1e-11
    assert np.allclose(u + central_gradient(phi, g), v, atol=1e-11)
    assert np.allclose(solvers.project(u, g)[0], u, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_skew_convection_does_no_work(seed):
    g = build_grid((1.0, 1.0), (8, 8))
    rng = np.random.default_rng(seed)
    U = solvers.project(rng.standard_normal((2, 8, 8)), g)[0]
    v = rng.standard_normal((2, 8, 8))
    assert abs(np.sum(v * solvers.skew_convection(U, v, g))) < 1e-10


@pytest.mark.parametrize("bc", ["periodic", "walls"])
def test_unforced_momentum_dissipates(bc):
    s, scen = random_state(3, n=(10, 10), bc=bc)
    # constant director: no elastic force
    d = np.zeros_like(s.d)
    d[2] = 1.0
    s = s.replace(d=d)
    u, _ = solvers.momentum_step(s, scen.coeffs, solvers.StepParams(dt=1e-2))
    assert np.max(np.abs(velocity_divergence(s.grid, u))) < 1e-10
    assert kinetic_energy(s.grid, u) < kinetic_energy(s.grid, s.u)


@pytest.mark.parametrize("form", ["chemical", "stress"])
def test_both_elastic_forms_give_solenoidal_velocity(form):
    s, scen = random_state(4, n=(16, 16))
    p = solvers.StepParams(dt=1e-4, elastic_form=form)
    u, _ = solvers.momentum_step(s, scen.coeffs, p)
    assert np.all(np.isfinite(u))
    assert np.max(np.abs(velocity_divergence(s.grid, u))) < 1e-10


@settings(max_examples=10, deadline=None)
@given(seeds, st.sampled_from(["periodic", "walls"]))
def test_heat_update_minimum_and_balance(seed, bc):
    s, scen = random_state(seed, bc=bc)
    new, info = solvers.advance(s, scen.coeffs, scen.params())
    assert new.theta.min() >= s.theta.min() - 1e-12
    gain = integrate(new.theta, s.grid) - integrate(s.theta, s.grid)
    assert gain == pytest.approx(scen.dt * info.heat_source_total, rel=1e-11)


def test_temperature_transport_condition():
    s, scen = random_state(5, amp=200.0)
    with pytest.raises(solvers.SchemeError):
        solvers.advance(s, scen.coeffs, solvers.StepParams(dt=0.01))


def test_coupled_step_advances_time_and_keeps_eps():
    s, scen = random_state(6)
    new = solvers.coupled_step(s, scen.coeffs, scen.params())
    assert isinstance(new, State)
    assert new.t == pytest.approx(1e-3)
    assert new.eps == s.eps


def test_picard_iterations_are_consistent():
    scen = harness.get_scenario("heated-shear-2d").with_(resolution=(16, 16))
    s = scen.initial_state()
    a = solvers.coupled_step(s, scen.coeffs, solvers.StepParams(dt=1e-3))
    b = solvers.coupled_step(s, scen.coeffs, solvers.StepParams(dt=1e-3, max_picard=3))
    # lagged coefficients differ from the iterated ones by O(dt^2)
    assert np.max(np.abs(a.theta - b.theta)) < 1e-4
    assert b.theta.min() >= s.theta.min() - 1e-12
