import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nemthsim import mac
from nemthsim.grid import build_grid


def _random_faces(grid, rng):
    u = mac.unpack(grid, rng.standard_normal(sum(mac.unknown_counts(grid))))
    return u


@pytest.fixture(params=[(6, 5), (4, 5, 6)])
def wall_grid(request):
    n = request.param
    return build_grid((1.0,) * len(n), n, "walls")


def test_pack_unpack_round_trip(wall_grid):
    rng = np.random.default_rng(0)
    v = rng.standard_normal(sum(mac.unknown_counts(wall_grid)))
    u = mac.unpack(wall_grid, v)
    assert np.array_equal(mac.pack(wall_grid, u), v)
    assert mac.boundary_flux(wall_grid, u) == 0.0


def test_projection_is_solenoidal_and_idempotent(wall_grid):
    u = _random_faces(wall_grid, np.random.default_rng(1))
    p, _ = mac.project(wall_grid, u)
    assert np.max(np.abs(mac.divergence(wall_grid, p))) < 1e-10
    q, _ = mac.project(wall_grid, p)
    assert max(np.max(np.abs(a - b)) for a, b in zip(p, q)) < 1e-10


def test_projection_rejects_wall_flux():
    g = build_grid((1.0, 1.0), (4, 4), "walls")
    u = mac.zero_velocity(g)
    u[0][0, 1] = 1.0
    with pytest.raises(ValueError, match="nonzero flux"):
        mac.project(g, u)


def test_gradient_is_minus_adjoint_of_divergence(wall_grid):
    rng = np.random.default_rng(2)
    u = _random_faces(wall_grid, rng)
    phi = rng.standard_normal(wall_grid.shape)
    g = mac.gradient(wall_grid, phi)
    lhs = sum(float(np.sum(a * b)) for a, b in zip(g, u))
    rhs = -float(np.sum(phi * mac.divergence(wall_grid, u)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_to_cells_and_from_cells_are_adjoint(wall_grid):
    rng = np.random.default_rng(3)
    u = _random_faces(wall_grid, rng)
    F = rng.standard_normal((wall_grid.dims,) + wall_grid.shape)
    lhs = float(np.sum(mac.to_cells(wall_grid, u) * F))
    rhs = float(np.dot(mac.pack(wall_grid, u), mac.pack(wall_grid, mac.from_cells(wall_grid, F))))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_convection_is_antisymmetric(seed):
    g = build_grid((1.0, 1.0), (5, 6), "walls")
    rng = np.random.default_rng(seed)
    U, _ = mac.project(g, _random_faces(g, rng))
    K = mac.convection_matrix(g, U)
    assert abs(K + K.T).max() < 1e-12
    v = rng.standard_normal(K.shape[0])
    assert abs(v @ (K @ v)) < 1e-10 * max(1.0, v @ v)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_viscous_form_matches_cell_dissipation(seed):
    g = build_grid((1.0, 2.0), (5, 4), "walls")
    rng = np.random.default_rng(seed)
    mu = 0.5 + rng.random(g.shape)
    u = _random_faces(g, rng)
    parts = mac.viscous_parts(g, mu)
    A = mac.viscous_matrix(parts)
    x = mac.pack(g, u)
    cells = mac.viscous_dissipation_cells(g, parts, u)
    assert np.all(cells >= 0.0)
    assert -x @ (A @ x) == pytest.approx(cells.sum(), rel=1e-12)
    assert abs(A - A.T).max() < 1e-12


def test_constant_viscosity_gives_compact_laplacian():
    # u = (0, 0) except one interior face: the five point stencil with odd ghosts
    g = build_grid((1.0, 1.0), (4, 4), "walls")
    h = 0.25
    parts = mac.viscous_parts(g, np.ones(g.shape))
    A = mac.viscous_matrix(parts)
    u = mac.zero_velocity(g)
    u[0][2, 0] = 1.0  # face next to the lower y wall
    out = mac.unpack(g, A @ mac.pack(g, u))[0]
    # 2 along x, 1 along y inside, 2 toward the wall (ghost = -u)
    assert out[2, 0] == pytest.approx(-(2 + 1 + 2) / h ** 2)
    assert out[1, 0] == pytest.approx(1 / h ** 2)
    assert out[2, 1] == pytest.approx(1 / h ** 2)
