import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nemthsim import galerkin, harness
from nemthsim.grid import build_grid, central_divergence, laplacian


@pytest.fixture(scope="module")
def grid():
    return build_grid((2 * np.pi, 2 * np.pi), (8, 8))


def test_basis_is_orthonormal_solenoidal_eigenbasis(grid):
    b = galerkin.build_basis(grid, 20)
    flat = b.fields.reshape(b.size, -1)
    gram = flat @ flat.T * grid.cell_volume
    assert np.allclose(gram, np.eye(b.size), atol=1e-12)
    for phi, lam in zip(b.fields, b.eigenvalues):
        assert np.max(np.abs(central_divergence(phi, grid))) < 1e-12
        assert np.allclose(laplacian(phi, grid), -lam * phi, atol=1e-11)
    assert np.all(np.diff(b.eigenvalues) >= -1e-9)


def test_full_basis_spans_solenoidal_fields(grid):
    from nemthsim.solvers import periodic_project

    b = galerkin.build_basis(grid, None, include_mean=True)
    v = periodic_project(grid, np.random.default_rng(0).standard_normal((2, 8, 8)), potential=False)
    back = galerkin.reconstruct_velocity(b, galerkin.project_velocity(b, v))
    assert np.allclose(back, v, atol=1e-12)


def test_basis_errors(grid):
    with pytest.raises(ValueError, match="periodic"):
        galerkin.build_basis(build_grid((1.0, 1.0), (4, 4), "walls"))
    with pytest.raises(ValueError, match="supports only"):
        galerkin.build_basis(grid, 10_000)


def test_low_modes_sample_continuous_eigenvalues(grid):
    b = galerkin.build_basis(grid, 4)
    # k = (1, 0) and (0, 1): lambda = 4 sin^2(h/2)/h^2 -> 1
    h = grid.spacing[0]
    assert np.allclose(b.eigenvalues, 4 * np.sin(h / 2) ** 2 / h ** 2)
    assert np.allclose(b.continuous, 1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_convection_tensor_skew(seed):
    g = build_grid((2 * np.pi, 2 * np.pi), (8, 8))
    b = galerkin.build_basis(g, 12)
    A = galerkin.convection_tensor(b)
    rng = np.random.default_rng(seed)
    a, c = rng.standard_normal((2, b.size))
    assert abs(np.einsum("ijk,i,j,k->", A, c, a, c)) < 1e-12


def test_constant_viscosity_matrix_is_diagonal(grid):
    b = galerkin.build_basis(grid, 10)
    co = harness.constant_coefficients(mu=0.2)
    B = galerkin.viscous_matrix(b, np.ones(grid.shape), co.mu)
    assert np.allclose(B, -0.2 * np.diag(b.eigenvalues), atol=1e-12)


def test_variable_viscosity_matrix_negative_definite(grid):
    b = galerkin.build_basis(grid, 10)
    theta = 0.5 + np.random.default_rng(1).random(grid.shape)
    B = galerkin.viscous_matrix(b, theta, harness.default_coefficients().mu)
    assert np.allclose(B, B.T, atol=1e-12)
    assert np.linalg.eigvalsh(B).max() < 0


def test_energy_envelope_and_blowup(grid):
    scen = harness.get_scenario("heated-shear-2d").with_(resolution=(8, 8))
    s = scen.initial_state()
    b = galerkin.build_basis(grid, 8)
    system = galerkin.assemble_ode(b, s.d, s.theta, scen.coeffs)
    traj = galerkin.integrate_galerkin(system, galerkin.project_velocity(b, s.u), 1e-3, 50)
    assert traj.within_envelope
    assert traj.coefficients.shape == (51, 8)
    with pytest.raises(galerkin.GalerkinBlowUp):
        galerkin.integrate_galerkin(system, np.full(8, 10.0), 1e-3, 5, blowup=1.0)


def test_refresh_hook_is_called(grid):
    scen = harness.get_scenario("heated-shear-2d").with_(resolution=(8, 8))
    s = scen.initial_state()
    b = galerkin.build_basis(grid, 6)
    system = galerkin.assemble_ode(b, s.d, s.theta, scen.coeffs)
    calls = []

    def refresh(sys_, g, t):
        calls.append(t)
        return sys_

    galerkin.integrate_galerkin(system, np.zeros(6), 1e-3, 4, refresh=refresh)
    assert calls == pytest.approx([1e-3, 2e-3, 3e-3])


def test_imex_step_matches_rhs_for_small_dt(grid):
    scen = harness.get_scenario("heated-shear-2d").with_(resolution=(8, 8))
    s = scen.initial_state()
    b = galerkin.build_basis(grid, 6)
    system = galerkin.assemble_ode(b, s.d, s.theta, scen.coeffs)
    g = galerkin.project_velocity(b, s.u)
    dt = 1e-7
    assert np.allclose((galerkin.imex_step(system, g, dt) - g) / dt, system.rhs(g), rtol=1e-5, atol=1e-6)
