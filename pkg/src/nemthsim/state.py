"""Simulation state and the discrete energy and dissipation functionals."""

from dataclasses import dataclass, replace
import math

import numpy as np

from . import mac
from .constitutive import (
    ginzburg_landau_energy,
    ginzburg_landau_force,
    entropy_production_density,
)
from .grid import (
    central_divergence,
    central_gradient,
    edge_values,
    face_gradient,
    face_to_cells,
    gradient_sq_cells,
    laplacian,
    axis_shift,
)

LIMIT = "limit"


def is_limit(eps):
    return isinstance(eps, str) and eps == LIMIT or (not isinstance(eps, str) and math.isinf(eps))


def normalize_eps(eps):
    if is_limit(eps):
        return LIMIT
    eps = float(eps)
    if not (eps > 0 and math.isfinite(eps)):
        raise ValueError(f"eps must be positive or 'limit', got {eps!r}")
    return eps


@dataclass(frozen=True, eq=False)
class State:
    """Fields at one time level.

    ``u`` is a ``(dims, *shape)`` array on periodic grids and a tuple of face
    arrays on wall grids; ``d`` has three components; ``P`` and ``theta`` are
    cell scalars.
    """

    grid: object
    u: object
    P: np.ndarray
    d: np.ndarray
    theta: np.ndarray
    t: float = 0.0
    eps: object = 0.25

    def replace(self, **kw):
        return replace(self, **kw)

    def copy(self):
        return State(self.grid, copy_velocity(self.u), self.P.copy(), self.d.copy(),
                     self.theta.copy(), self.t, self.eps)


def copy_velocity(u):
    if isinstance(u, tuple):
        return tuple(c.copy() for c in u)
    return u.copy()


def zero_velocity(grid):
    if grid.staggered:
        return mac.zero_velocity(grid)
    return np.zeros((grid.dims,) + grid.shape)


def cell_velocity(grid, u):
    if grid.staggered:
        return mac.to_cells(grid, u)
    return u


def velocity_divergence(grid, u):
    if grid.staggered:
        return mac.divergence(grid, u)
    return central_divergence(u, grid)


def face_velocity(grid, u):
    """Normal velocity on the faces used by conservative transport.

    Periodic grids average neighbouring cells (n faces per axis, face ``i``
    between cells ``i`` and ``i+1``); wall grids return the MAC arrays.
    """
    if grid.staggered:
        return u
    return [0.5 * (u[a] + np.roll(u[a], -1, axis=a)) for a in range(grid.dims)]


def kinetic_energy(grid, u):
    if grid.staggered:
        return 0.5 * grid.cell_volume * float(sum(np.sum(mac.interior(grid, u[a], a) ** 2)
                                                    for a in range(grid.dims)))
    return 0.5 * grid.cell_volume * float(np.sum(u * u))


def face_viscosity(grid, mu_cells):
    """Viscosity on each axis face of a periodic grid, averaged from cells."""
    return [edge_values(mu_cells, grid, axis_shift(grid, a)).reshape(grid.shape)
            for a in range(grid.dims)]


def viscous_dissipation_cells(grid, u, mu_cells, parts=None):
    """Cell density of the discrete viscous dissipation mu |grad u|^2.

    Summed over cells (times the cell volume) this equals the quadratic form
    of the implicit viscous operator exactly.
    """
    if grid.staggered:
        if parts is None:
            parts = mac.viscous_parts(grid, mu_cells)
        return mac.viscous_dissipation_cells(grid, parts, u)
    g = face_gradient(u, grid)  # (dims, ncomp, ...)
    q = np.sum(g * g, axis=1) * np.stack(face_viscosity(grid, mu_cells))
    return face_to_cells(q, grid)


def director_residual(grid, d, eps):
    """Relaxation residual: lap d - f_eps(d), or lap d + |grad d|^2 d in the limit."""
    lap = laplacian(d, grid)
    if is_limit(eps):
        return lap + gradient_sq_cells(d, grid) * d
    return lap - ginzburg_landau_force(d, eps)


def penalty_density(d, eps):
    if is_limit(eps):
        return np.zeros(d.shape[1:])
    return ginzburg_landau_energy(d, eps)


def elastic_energy(grid, d):
    return 0.5 * grid.cell_volume * float(np.sum(face_gradient(d, grid) ** 2))


def energy_density(grid, u, d, theta, eps):
    """Total energy per cell: kinetic + elastic + penalty + thermal."""
    uc = cell_velocity(grid, u)
    if grid.staggered:
        # per-face kinetic energy, split to both adjacent cells
        kin = np.zeros(grid.shape)
        for a in range(grid.dims):
            e = 0.5 * u[a] ** 2
            kin += 0.5 * (mac._take(e, a, slice(0, -1)) + mac._take(e, a, slice(1, None)))
    else:
        kin = 0.5 * np.sum(uc * uc, axis=0)
    return kin + 0.5 * gradient_sq_cells(d, grid) + penalty_density(d, eps) + theta


def entropy_production_cells(state, coeffs, eps=None):
    grid = state.grid
    eps = state.eps if eps is None else eps
    mu = coeffs.mu(state.theta)
    visc = viscous_dissipation_cells(grid, state.u, mu)
    r = director_residual(grid, state.d, eps)
    gt = central_gradient(state.theta, grid, "even")
    return entropy_production_density(state.theta, visc, np.sum(r * r, axis=0), gt, state.d,
                                      coeffs.k(state.theta), coeffs.h(state.theta))
