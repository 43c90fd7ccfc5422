"""Time stepping for director, momentum and temperature.

One coupled step advances the director with the old velocity, then velocity
and pressure with the elastic force of the new director, then temperature with
the new velocity and director:

* director: implicit Laplacian, explicit penalty with stabilization ``S``,
  first-order upwind transport.  With ``S = 1/eps^2`` and
  ``dt * sum|w_a|/h_a + dt/eps^2 <= 1`` the update is a convex combination
  followed by an M-matrix solve, so ``|d| <= 1`` and ``d3 >= 0`` persist.
* momentum: skew-symmetric convection linearized about the old velocity,
  implicit variable-viscosity diffusion, elastic force
  ``-(upwind grad d)^T mu`` paired with the director transport, solved as one
  velocity-pressure system on the discretely solenoidal subspace.
* temperature: conservative upwind transport, implicit anisotropic conduction
  on a positive-weight lattice stencil, and heating sources equal to the
  discrete mechanical dissipation, so heat is conserved to round-off and the
  minimum temperature never decreases.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math
import warnings

import numpy as np
import scipy.sparse as sp

from . import mac
from .constitutive import (
    conductivity_tensor,
    ericksen_stress,
    ginzburg_landau_energy,
    ginzburg_landau_force,
    lattice_coefficients,
)
from .grid import (
    _shifted,
    axis_shift,
    central_divergence,
    central_gradient,
    edge_values,
    face_divergence,
    face_gradient,
    graph_laplacian,
    gradient_sq_cells,
    laplacian_matrix,
    pad,
)
from .linalg import factorize, gmres_solve, solve_spd_increment, SolverError
from .state import (
    State,
    cell_velocity,
    director_residual,
    face_velocity,
    face_viscosity,
    is_limit,
    viscous_dissipation_cells,
)


class SchemeError(RuntimeError):
    """A step cannot guarantee its structural properties and was refused."""


class MaximumPrincipleViolation(SchemeError):
    pass


@dataclass(frozen=True)
class StepParams:
    dt: float = 1e-3
    S: float = None
    elastic_form: str = "chemical"
    max_picard: int = 1
    strict: bool = True
    rtol: float = 1e-13
    renorm_floor: float = 0.5

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.elastic_form not in ("chemical", "stress"):
            raise ValueError(f"elastic_form must be 'chemical' or 'stress', got {self.elastic_form!r}")
        if self.max_picard < 1:
            raise ValueError("max_picard must be at least 1")

    def stabilization(self, eps):
        if self.S is not None:
            return float(self.S)
        return 0.0 if is_limit(eps) else 1.0 / (eps * eps)


@dataclass
class StepInfo:
    director_cfl: float = 0.0
    heat_cfl: float = 0.0
    clipped_cells: int = 0
    gmres_iterations: int = 0
    heat_source_total: float = 0.0
    flags: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# director


def upwind_gradient(grid, d, w):
    """One-sided differences chosen against the velocity ``w``: ``(dims, 3, ...)``."""
    p = pad(d, grid, "even")
    c = _shifted(p, grid, 0, 0)
    out = np.empty((grid.dims,) + d.shape)
    for a, h in enumerate(grid.spacing):
        back = (c - _shifted(p, grid, a, -1)) / h
        fwd = (_shifted(p, grid, a, 1) - c) / h
        out[a] = np.where(w[a] > 0, back, fwd)
    return out


def transport_term(g_up, w):
    return np.einsum("a...,ak...->k...", w, g_up)


def courant_number(grid, w, dt):
    return float(np.max(sum(np.abs(w[a]) / h for a, h in enumerate(grid.spacing)))) * dt


@lru_cache(maxsize=16)
def _helmholtz(grid, diag, dt):
    n = grid.ncells
    A = diag * sp.identity(n, format="csr") - dt * laplacian_matrix(grid)
    return factorize(A, "director Helmholtz")


def _solve_components(solve, rhs):
    return np.stack([solve(r.ravel()).reshape(r.shape) for r in rhs])


def director_update(grid, d, w, eps, params, info=None):
    """Advance the director; returns ``(d_new, chemical, upwind_gradient)``.

    ``chemical`` is the discrete material derivative (d_new - d)/dt + w . grad d,
    which also equals the relaxation residual the scheme used.
    """
    dt = params.dt
    g = upwind_gradient(grid, d, w)
    T = transport_term(g, w)
    cfl = courant_number(grid, w, dt)
    if is_limit(eps):
        S = params.stabilization(eps)
        rhs = d - dt * T + dt * gradient_sq_cells(d, grid) * d
        dstar = _solve_components(_helmholtz(grid, 1.0 + S * dt, dt), rhs + dt * S * d)
        norm = np.sqrt(np.sum(dstar * dstar, axis=0))
        if np.min(norm) < params.renorm_floor:
            raise SchemeError(f"director length fell to {np.min(norm):.3g} before renormalization "
                              f"(floor {params.renorm_floor}); reduce dt")
        d_new = dstar / norm
        bound = cfl
    else:
        S = params.stabilization(eps)
        rhs = d - dt * T + dt * (S * d - ginzburg_landau_force(d, eps))
        d_new = _solve_components(_helmholtz(grid, 1.0 + S * dt, dt), rhs)
        bound = cfl + dt * max(0.0, 2.0 / eps ** 2 - S)
    if info is not None:
        info.director_cfl = bound
    if bound > 1.0 and params.strict:
        raise SchemeError(f"director step condition violated: {bound:.3g} > 1 (reduce dt)")
    chem = (d_new - d) / dt + T
    return d_new, chem, g


def director_step(state, w, params):
    """Director at the next time level for a prescribed cell velocity ``w``."""
    w = cell_velocity(state.grid, w)
    return director_update(state.grid, state.d, w, state.eps, params)[0]


def limit_director_step(state, w, params):
    """Unit-length director update (harmonic map heat flow with transport)."""
    if not is_limit(state.eps):
        state = state.replace(eps="limit")
    return director_step(state, w, params)


# ---------------------------------------------------------------------------
# projection


@lru_cache(maxsize=16)
def _symbols(grid):
    freqs = []
    for a, (n, h) in enumerate(zip(grid.resolution, grid.spacing)):
        if a == grid.dims - 1:
            k = 2.0 * np.pi * np.fft.rfftfreq(n, d=h)
        else:
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
        freqs.append(np.sin(k * h) / h)
    s = np.meshgrid(*freqs, indexing="ij")
    s2 = sum(x * x for x in s)
    inv = np.where(s2 > 1e-12 * max(1.0, float(s2.max())), 1.0 / np.where(s2 > 0, s2, 1.0), 0.0)
    return s, inv


def _fft_potential(grid, v):
    axes = tuple(range(1, grid.dims + 1))
    vh = np.fft.rfftn(v, axes=axes)
    s, inv = _symbols(grid)
    sv = sum(s[a] * vh[a] for a in range(grid.dims))
    coef = sv * inv
    return vh, s, coef


def periodic_project(grid, v, potential=True):
    """Orthogonal projection onto the kernel of the central divergence."""
    axes = tuple(range(1, grid.dims + 1))
    vh, s, coef = _fft_potential(grid, v)
    out = np.stack([vh[a] - s[a] * coef for a in range(grid.dims)])
    u = np.fft.irfftn(out, s=grid.shape, axes=axes)
    if not potential:
        return u
    # potential with G phi = v - Pv, G = central gradient (symbol i s)
    phi = np.fft.irfftn(-1j * coef, s=grid.shape, axes=tuple(range(grid.dims)))
    return u, phi


def project(u_star, grid):
    """Discrete Leray projection; returns ``(u, phi)`` with ``u = u* - grad phi``."""
    if grid.staggered:
        return mac.project(grid, u_star)
    return periodic_project(grid, np.asarray(u_star, dtype=float))


# ---------------------------------------------------------------------------
# momentum


def skew_convection(U, v, grid):
    """1/2 [(U . grad) v + div(U (x) v)] with central differences (periodic)."""
    out = np.zeros_like(v)
    for b, h in enumerate(grid.spacing):
        ax = b + 1

        def D(f):
            return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * h)

        out += 0.5 * (U[b] * D(v) + D(U[b] * v))
    return out


def viscous_apply(v, grid, mu_faces):
    """div(mu grad v) with the compact face pair (periodic)."""
    g = face_gradient(v, grid)
    return face_divergence(np.stack([mu_faces[a] * g[a] for a in range(grid.dims)]), grid)


def elastic_force(grid, d, chem, g_up, form="chemical"):
    """Force density on the fluid at cell centres, ``(dims, ...)``."""
    if form == "chemical":
        return -np.einsum("ak...,k...->a...", g_up, chem)
    G = central_gradient(d, grid, "even")
    S = ericksen_stress(G)
    return -np.stack([central_divergence(S[a], grid, "even") for a in range(grid.dims)])


def pressure_offset(grid, d, eps, form):
    """Gradient part absorbed by the chemical-form force (subtracted from phi/dt)."""
    if form != "chemical":
        return 0.0
    extra = 0.5 * gradient_sq_cells(d, grid)
    if not is_limit(eps):
        extra = extra + ginzburg_landau_energy(d, eps)
    return extra


def _momentum_periodic(grid, u, mu_cells, force, params, info):
    dt = params.dt
    mu_f = face_viscosity(grid, mu_cells)
    rhs = u + dt * force
    shape = u.shape

    def A(v):
        return v + dt * skew_convection(u, v, grid) - dt * viscous_apply(v, grid, mu_f)

    # Krylov vectors stay in the solenoidal subspace, where the operator is P A
    def op(x):
        return periodic_project(grid, A(x.reshape(shape)), potential=False).ravel()

    b = periodic_project(grid, rhs, potential=False)
    x0 = periodic_project(grid, u, potential=False)
    x = gmres_solve(op, b.ravel(), b.size, "momentum", rtol=params.rtol, x0=x0.ravel())
    u_new = periodic_project(grid, x.reshape(shape), potential=False)
    _, phi = periodic_project(grid, rhs - A(u_new))
    return u_new, phi


def _momentum_walls(grid, u, mu_cells, force, params, info):
    dt = params.dt
    K = mac.convection_matrix(grid, u)
    parts = mac.viscous_parts(grid, mu_cells)
    Lv = mac.viscous_matrix(parts)
    A = sp.identity(K.shape[0], format="csr") + dt * K - dt * Lv
    F = mac.from_cells(grid, force)
    rhs = mac.pack(grid, u) + dt * mac.pack(grid, F)

    def P(x):
        uu, _ = mac.project(grid, mac.unpack(grid, x))
        return mac.pack(grid, uu)

    def op(x):
        return P(A @ x)

    b = P(rhs)
    x = gmres_solve(op, b, b.size, "momentum", rtol=params.rtol, x0=P(mac.pack(grid, u)))
    x = P(x)
    u_new = mac.unpack(grid, x)
    _, phi = mac.project(grid, mac.unpack(grid, rhs - A @ x))
    return u_new, phi


def momentum_update(grid, u, theta, d, chem, g_up, coeffs, eps, params, info=None):
    mu_cells = coeffs.mu(theta)
    force = elastic_force(grid, d, chem, g_up, params.elastic_form)
    if grid.staggered:
        u_new, phi = _momentum_walls(grid, u, mu_cells, force, params, info)
    else:
        u_new, phi = _momentum_periodic(grid, u, mu_cells, force, params, info)
    P = phi / params.dt - pressure_offset(grid, d, eps, params.elastic_form)
    return u_new, P


def momentum_step(state, coeffs, params):
    """Velocity and pressure at the next level with the director held fixed.

    The elastic force uses the relaxation residual of the current director.
    """
    grid = state.grid
    w = cell_velocity(grid, state.u)
    chem = director_residual(grid, state.d, state.eps)
    g = upwind_gradient(grid, state.d, w)
    return momentum_update(grid, state.u, state.theta, state.d, chem, g, coeffs, state.eps, params)


# ---------------------------------------------------------------------------
# temperature


def heat_transport(grid, u, theta):
    """Conservative first-order upwind div(U theta) with face normal velocities."""
    U = face_velocity(grid, u)
    out = np.zeros(grid.shape)
    for a, h in enumerate(grid.spacing):
        if grid.staggered:
            lo = mac._take(np.pad(theta, [(1, 1) if b == a else (0, 0) for b in range(grid.dims)],
                                  mode="edge"), a, slice(0, -1))
            hi = mac._take(np.pad(theta, [(1, 1) if b == a else (0, 0) for b in range(grid.dims)],
                                  mode="edge"), a, slice(1, None))
            F = np.where(U[a] > 0, U[a] * lo, U[a] * hi)
            out += np.diff(F, axis=a) / h
        else:
            hi = np.roll(theta, -1, axis=a)
            F = np.where(U[a] > 0, U[a] * theta, U[a] * hi)
            out += (F - np.roll(F, 1, axis=a)) / h
    return out


def heat_outflow_number(grid, u, dt):
    U = face_velocity(grid, u)
    out = np.zeros(grid.shape)
    for a, h in enumerate(grid.spacing):
        if grid.staggered:
            out += (np.maximum(mac._take(U[a], a, slice(1, None)), 0.0)
                    - np.minimum(mac._take(U[a], a, slice(0, -1)), 0.0)) / h
        else:
            out += (np.maximum(U[a], 0.0) - np.minimum(np.roll(U[a], 1, axis=a), 0.0)) / h
    return float(np.max(out)) * dt


def conduction_edges(grid, theta, d, coeffs):
    """Edge weights of the anisotropic conduction stencil; ``(edges, clipped)``."""
    D = conductivity_tensor(coeffs.k(theta), coeffs.h(theta), d, grid.dims)
    cell, clipped = lattice_coefficients(D, grid.spacing)
    return {shift: edge_values(c, grid, shift) for shift, c in cell.items()}, clipped


def conduction_matrix(grid, theta, d, coeffs):
    edges, clipped = conduction_edges(grid, theta, d, coeffs)
    return graph_laplacian(grid, edges), clipped


def heat_sources(grid, theta, u, d, coeffs, eps):
    """Viscous heating (viscosity at ``theta``) plus director relaxation squared."""
    visc = viscous_dissipation_cells(grid, u, coeffs.mu(theta))
    r = director_residual(grid, d, eps)
    return visc + np.sum(r * r, axis=0)


def heat_update(grid, theta, u_new, d_new, coeffs, eps, params, info=None, coef_theta=None):
    """Implicit temperature update; returns ``(theta_new, sources)``."""
    dt = params.dt
    coef_theta = theta if coef_theta is None else coef_theta
    outflow = heat_outflow_number(grid, u_new, dt)
    if info is not None:
        info.heat_cfl = outflow
    if outflow > 1.0 and params.strict:
        raise SchemeError(f"temperature transport condition violated: {outflow:.3g} > 1 (reduce dt)")
    L, clipped = conduction_matrix(grid, coef_theta, d_new, coeffs)
    src = heat_sources(grid, coef_theta, u_new, d_new, coeffs, eps)
    rhs = theta - dt * heat_transport(grid, u_new, theta) + dt * src
    A = (sp.identity(grid.ncells, format="csr") - dt * L).tocsr()
    theta_new = solve_spd_increment(A, rhs.ravel(), theta.ravel(), "heat").reshape(grid.shape)
    if info is not None:
        info.clipped_cells = clipped
        info.heat_source_total = float(np.sum(src)) * grid.cell_volume
        if clipped:
            info.flags.append(f"conduction stencil clipped in {clipped} cells")
    return theta_new, src


def heat_step(state, u_new, d_new, coeffs, params):
    """Temperature at the next level given the new velocity and director."""
    theta_new, _ = heat_update(state.grid, state.theta, u_new, d_new, coeffs, state.eps, params)
    return theta_new


# ---------------------------------------------------------------------------
# coupled


def advance(state, coeffs, params):
    """One coupled step; returns ``(new_state, StepInfo)``."""
    grid = state.grid
    info = StepInfo()
    w = cell_velocity(grid, state.u)
    d_new, chem, g = director_update(grid, state.d, w, state.eps, params, info)
    u_new, P = momentum_update(grid, state.u, state.theta, state.d, chem, g, coeffs,
                               state.eps, params, info)
    theta_new, _ = heat_update(grid, state.theta, u_new, d_new, coeffs, state.eps, params, info)
    for _ in range(params.max_picard - 1):
        theta_new, _ = heat_update(grid, state.theta, u_new, d_new, coeffs, state.eps, params,
                                   info, coef_theta=theta_new)
    floor = float(np.min(state.theta))
    low = float(np.min(theta_new))
    if low < floor - 1e-10 * max(1.0, abs(floor)):
        msg = f"temperature minimum decreased from {floor!r} to {low!r}"
        info.flags.append(msg)
        if params.strict:
            raise MaximumPrincipleViolation(msg)
        warnings.warn(msg)
    new = State(grid, u_new, P, d_new, theta_new, state.t + params.dt, state.eps)
    return new, info


def coupled_step(state, coeffs, params):
    return advance(state, coeffs, params)[0]
