"""Faedo-Galerkin reduction of the momentum equation on periodic grids.

The basis consists of real Fourier modes ``cos(k.x) a`` and ``sin(k.x) a`` with
``a`` orthogonal to the central-difference symbol ``s(k) = sin(k h)/h``, so
every mode is exactly solenoidal for the grid divergence and an eigenvector of
the compact Laplacian with eigenvalue ``-lambda(k)``,
``lambda(k) = sum_a 4 sin^2(k_a h_a / 2) / h_a^2``.  The reduced system is

    dg_i/dt = sum_jk A_ijk g_j g_k + sum_j B_ij g_j + C_i
"""

from dataclasses import dataclass
import itertools
import math

import numpy as np

from .grid import central_gradient, central_divergence
from .constitutive import ericksen_stress
from .solvers import skew_convection, viscous_apply
from .state import face_viscosity


class GalerkinBlowUp(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GalerkinBasis:
    grid: object
    fields: np.ndarray        # (m, dims, *shape)
    eigenvalues: np.ndarray   # discrete lambda(k)
    wavenumbers: np.ndarray   # (m, dims) integer wave vectors
    continuous: np.ndarray    # |k|^2

    @property
    def size(self):
        return len(self.eigenvalues)


def _orthonormal_complement(s):
    """Orthonormal basis of the plane orthogonal to ``s`` (all axes if s = 0)."""
    dims = len(s)
    norm = np.linalg.norm(s)
    if norm == 0.0:
        return [np.eye(dims)[a] for a in range(dims)]
    n = s / norm
    out = []
    for e in np.eye(dims):
        v = e - np.dot(e, n) * n
        for w in out:
            v = v - np.dot(v, w) * w
        if np.linalg.norm(v) > 1e-8:
            out.append(v / np.linalg.norm(v))
        if len(out) == dims - 1:
            break
    return out


def build_basis(grid, m=None, include_mean=False):
    """The first ``m`` solenoidal modes ordered by eigenvalue (all if m is None)."""
    if not grid.periodic:
        raise ValueError("Galerkin bases are built on periodic grids")
    h = np.array(grid.spacing)
    L = np.array(grid.extent)
    x = grid.cell_centers()
    candidates = []
    seen = set()
    for n in itertools.product(*[range(N) for N in grid.resolution]):
        neg = tuple((-ni) % N for ni, N in zip(n, grid.resolution))
        key = min(n, neg)
        if key in seen:
            continue
        seen.add(key)
        if not include_mean and not any(key):
            continue
        # centred representative in (-N/2, N/2]
        nc = np.array([ni if ni <= N // 2 else ni - N for ni, N in zip(key, grid.resolution)])
        k = 2.0 * np.pi * nc / L
        s = np.sin(k * h) / h
        s[np.abs(s) < 1e-12 / h] = 0.0
        lam = float(np.sum(4.0 * np.sin(k * h / 2.0) ** 2 / h ** 2))
        phase = sum(k[a] * x[a] for a in range(grid.dims))
        for trig_id, trig in enumerate((np.cos(phase), np.sin(phase))):
            tnorm = math.sqrt(float(np.sum(trig * trig)) * grid.cell_volume)
            if tnorm < 1e-8:
                continue
            for dir_id, a in enumerate(_orthonormal_complement(s)):
                candidates.append((
                    round(lam, 9), int(np.sum(nc * nc)), tuple(int(v) for v in nc), trig_id, dir_id,
                    lam, nc, np.stack([trig * a[b] / tnorm for b in range(grid.dims)]),
                ))
    candidates.sort(key=lambda c: c[:5])
    if m is None:
        m = len(candidates)
    if m > len(candidates):
        raise ValueError(f"grid supports only {len(candidates)} modes, asked for {m}")
    chosen = candidates[:m]
    return GalerkinBasis(
        grid=grid,
        fields=np.stack([c[7] for c in chosen]),
        eigenvalues=np.array([c[5] for c in chosen]),
        wavenumbers=np.stack([c[6] for c in chosen]),
        continuous=np.array([float(np.sum((2 * np.pi * c[6] / L) ** 2)) for c in chosen]),
    )


def project_velocity(basis, u):
    vol = basis.grid.cell_volume
    return np.tensordot(basis.fields, u, axes=u.ndim) * vol


def reconstruct_velocity(basis, g):
    return np.tensordot(g, basis.fields, axes=1)


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    basis: GalerkinBasis
    A: np.ndarray   # (m, m, m)
    B: np.ndarray   # (m, m)
    C: np.ndarray   # (m,)

    def rhs(self, g):
        return np.einsum("ijk,j,k->i", self.A, g, g) + self.B @ g + self.C


def convection_tensor(basis):
    """A_ijk = -<skew_convection(phi_j, phi_k), phi_i>."""
    grid = basis.grid
    phi = basis.fields
    m = basis.size
    A = np.empty((m, m, m))
    flat = phi.reshape(m, -1)
    for j in range(m):
        conv = np.stack([skew_convection(phi[j], phi[k], grid) for k in range(m)])
        A[:, j, :] = -(flat @ conv.reshape(m, -1).T) * grid.cell_volume
    return A


def viscous_matrix(basis, theta, mu):
    """B_ij = <div(mu grad phi_j), phi_i> with mu evaluated at the temperature."""
    grid = basis.grid
    mu_f = face_viscosity(grid, mu(theta))
    m = basis.size
    flat = basis.fields.reshape(m, -1)
    lap = np.stack([viscous_apply(basis.fields[j], grid, mu_f) for j in range(m)]).reshape(m, -1)
    return (flat @ lap.T) * grid.cell_volume


def elastic_forcing(basis, d):
    """C_i = <-div(grad d . grad d), phi_i>."""
    grid = basis.grid
    G = central_gradient(d, grid, "even")
    S = ericksen_stress(G)
    F = -np.stack([central_divergence(S[a], grid, "even") for a in range(grid.dims)])
    return project_velocity(basis, F)


def assemble_ode(basis, d, theta, coeffs, A=None):
    """Reduced coefficients for the current director and temperature.

    ``A`` depends only on the basis and may be passed in to avoid recomputing.
    """
    if A is None:
        A = convection_tensor(basis)
    return GalerkinSystem(basis, A, viscous_matrix(basis, theta, coeffs.mu), elastic_forcing(basis, d))


def imex_step(system, g, dt):
    """Implicit in viscosity and in convection linearized about ``g``."""
    m = len(g)
    lin = np.einsum("ijk,j->ik", system.A, g)
    M = np.eye(m) - dt * system.B - dt * lin
    return np.linalg.solve(M, g + dt * system.C)


@dataclass
class GalerkinTrajectory:
    times: np.ndarray
    coefficients: np.ndarray
    energy: np.ndarray
    envelope: np.ndarray

    @property
    def within_envelope(self):
        return bool(np.all(self.energy <= self.envelope * (1 + 1e-10) + 1e-14))


def integrate_galerkin(system, g0, dt, n_steps, refresh=None, blowup=1e12):
    """Classical RK4 with an optional coefficient refresh between steps.

    ``refresh(system, g, t)`` returns an updated system (for example with a new
    director and temperature).  The energy sum |g|^2 is compared against the
    envelope (|g(0)| + max|C| t)^2 implied by A skew and B <= 0.
    """
    g = np.array(g0, dtype=float)
    times = [0.0]
    traj = [g.copy()]
    cmax = float(np.linalg.norm(system.C))
    g0n = float(np.linalg.norm(g))
    for n in range(n_steps):
        t = n * dt
        if refresh is not None and n > 0:
            system = refresh(system, g, t)
            cmax = max(cmax, float(np.linalg.norm(system.C)))
        k1 = system.rhs(g)
        k2 = system.rhs(g + 0.5 * dt * k1)
        k3 = system.rhs(g + 0.5 * dt * k2)
        k4 = system.rhs(g + dt * k3)
        g = g + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        energy = float(np.dot(g, g))
        if not math.isfinite(energy) or energy > blowup:
            raise GalerkinBlowUp(f"coefficient energy {energy:.3g} exceeded {blowup:.3g} at t={t + dt:.4g}")
        times.append(t + dt)
        traj.append(g.copy())
    times = np.array(times)
    coeffs = np.stack(traj)
    energy = np.sum(coeffs ** 2, axis=1)
    envelope = (g0n + cmax * times) ** 2
    return GalerkinTrajectory(times, coeffs, energy, envelope)
