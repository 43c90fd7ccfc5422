import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nemthsim import harness, oracle, solvers


def _scenario(seed, n, eps):
    init = harness.InitialSpec(u0="random", u0_amp=0.3, d0="random", theta0="random", seed=seed)
    return harness.Scenario("o", (1.0,) * len(n), n, initial=init, eps=eps, dt=1e-3, T_end=1e-3)


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.5, 0.2, "limit"]), st.sampled_from(["chemical", "stress"]))
def test_dense_oracle_matches_production_2d(seed, eps, form):
    scen = _scenario(seed, (6, 5), eps).with_(elastic_form=form)
    rep = harness.oracle_compare(scen, threshold=1e-9)
    assert rep.max_discrepancy < 1e-9


def test_dense_oracle_matches_production_3d():
    rep = harness.oracle_compare(_scenario(4, (4, 5, 4), 0.3), threshold=1e-9)
    assert set(rep.discrepancies) == {"u", "P", "d", "theta"}
    assert rep.max_discrepancy < 1e-9


def test_oracle_detects_a_perturbed_step():
    scen = _scenario(1, (6, 6), 0.5)
    s = scen.initial_state()
    u, P, d, theta = oracle.dense_coupled_step(s, scen.coeffs, scen.params())
    new = solvers.coupled_step(s, scen.coeffs, solvers.StepParams(dt=1e-3, S=3.0))
    # a different stabilization is a different scheme
    assert np.max(np.abs(new.d - d)) > 1e-9


def test_oracle_limits():
    walls = harness.get_scenario("heated-shear-walls")
    with pytest.raises(ValueError, match="periodic"):
        oracle.dense_coupled_step(walls.initial_state(), walls.coeffs, walls.params())
    big = harness.get_scenario("heated-shear-2d")
    with pytest.raises(ValueError, match="16 cells"):
        harness.oracle_compare(big)
