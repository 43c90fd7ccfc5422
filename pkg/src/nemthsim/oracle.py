"""Dense reference implementation of one coupled step on small periodic grids.

Every operator is assembled entry by entry from cell multi-indices and solved
with dense linear algebra.  Nothing here reuses the production stencils, so a
match between the two is evidence that both implement the same scheme.
"""

import itertools

import numpy as np


class _Cells:
    def __init__(self, grid):
        if not grid.periodic:
            raise ValueError("the dense oracle supports periodic grids only")
        self.grid = grid
        self.n = grid.resolution
        self.h = grid.spacing
        self.dims = grid.dims
        self.cells = list(itertools.product(*[range(k) for k in self.n]))
        self.N = len(self.cells)

    def index(self, c):
        i = 0
        for ck, nk in zip(c, self.n):
            i = i * nk + (ck % nk)
        return i

    def neighbor(self, c, a, s):
        c = list(c)
        c[a] += s
        return self.index(c)

    def flat(self, f):
        return np.array([f[c] for c in self.cells])

    def unflat(self, v):
        out = np.empty(self.n)
        for i, c in enumerate(self.cells):
            out[c] = v[i]
        return out

    def central(self, a):
        D = np.zeros((self.N, self.N))
        for i, c in enumerate(self.cells):
            D[i, self.neighbor(c, a, 1)] += 1.0 / (2 * self.h[a])
            D[i, self.neighbor(c, a, -1)] -= 1.0 / (2 * self.h[a])
        return D

    def laplacian(self, weights=None):
        """Compact Laplacian; ``weights[a][i]`` multiplies the face i -> i+e_a."""
        L = np.zeros((self.N, self.N))
        for a in range(self.dims):
            for i, c in enumerate(self.cells):
                j = self.neighbor(c, a, 1)
                w = 1.0 if weights is None else weights(a, i, j)
                w /= self.h[a] ** 2
                L[i, j] += w
                L[j, i] += w
                L[i, i] -= w
                L[j, j] -= w
        return L


def _gl_force(d, eps):
    s = np.sum(d * d, axis=0) - 1.0
    return s * d / eps ** 2


def _grad_sq_faces(cells, v):
    """Per cell: sum over axes of the mean of squared one-sided differences."""
    out = np.zeros(cells.N)
    for i, c in enumerate(cells.cells):
        acc = 0.0
        for a in range(cells.dims):
            jp = cells.neighbor(c, a, 1)
            jm = cells.neighbor(c, a, -1)
            fp = (v[:, jp] - v[:, i]) / cells.h[a]
            fm = (v[:, i] - v[:, jm]) / cells.h[a]
            acc += 0.5 * (np.dot(fp, fp) + np.dot(fm, fm))
        out[i] = acc
    return out


def dense_coupled_step(state, coeffs, params):
    """One step of the scheme with dense matrices; returns (u, P, d, theta)."""
    from .state import is_limit

    grid = state.grid
    cells = _Cells(grid)
    N, dims, dt = cells.N, cells.dims, params.dt
    eps = state.eps
    limit = is_limit(eps)
    S = params.S if params.S is not None else (0.0 if limit else 1.0 / eps ** 2)

    u = np.stack([cells.flat(state.u[a]) for a in range(dims)])
    d = np.stack([cells.flat(state.d[k]) for k in range(3)])
    theta = cells.flat(state.theta)
    Lap = cells.laplacian()
    Dc = [cells.central(a) for a in range(dims)]

    # --- director
    g = np.zeros((dims, 3, N))
    for i, c in enumerate(cells.cells):
        for a in range(dims):
            if u[a, i] > 0:
                g[a, :, i] = (d[:, i] - d[:, cells.neighbor(c, a, -1)]) / cells.h[a]
            else:
                g[a, :, i] = (d[:, cells.neighbor(c, a, 1)] - d[:, i]) / cells.h[a]
    T = np.einsum("ai,aki->ki", u, g)
    M = (1.0 + S * dt) * np.eye(N) - dt * Lap
    if limit:
        rhs = d - dt * T + dt * _grad_sq_faces(cells, d) * d + dt * S * d
        dstar = np.linalg.solve(M, rhs.T).T
        d_new = dstar / np.sqrt(np.sum(dstar * dstar, axis=0))
    else:
        rhs = d - dt * T + dt * (S * d - _gl_force(d, eps))
        d_new = np.linalg.solve(M, rhs.T).T
    chem = (d_new - d) / dt + T

    # --- momentum
    if params.elastic_form == "chemical":
        F = -np.einsum("aki,ki->ai", g, chem)
    else:
        G = np.stack([[Dc[a] @ d[k] for k in range(3)] for a in range(dims)])
        Sab = np.einsum("aki,bki->abi", G, G)
        F = -np.stack([sum(Dc[b] @ Sab[a, b] for b in range(dims)) for a in range(dims)])
    mu = coeffs.mu(theta)
    Lmu = cells.laplacian(lambda a, i, j: 0.5 * (mu[i] + mu[j]))
    K = 0.5 * sum(np.diag(u[b]) @ Dc[b] + Dc[b] @ np.diag(u[b]) for b in range(dims))
    block = np.eye(N) + dt * K - dt * Lmu
    A = np.kron(np.eye(dims), block)
    Dfull = np.hstack(Dc)             # divergence: N x dims*N
    Gfull = np.vstack(Dc)             # gradient: dims*N x N
    DGp = np.linalg.pinv(Dfull @ Gfull)
    Pr = np.eye(dims * N) - Gfull @ DGp @ Dfull
    w_eig, V = np.linalg.eigh(0.5 * (Pr + Pr.T))
    Q = V[:, w_eig > 0.5]
    r = (u + dt * F).ravel()
    y = np.linalg.solve(Q.T @ A @ Q, Q.T @ r)
    u_new_flat = Q @ y
    phi = DGp @ Dfull @ (r - A @ u_new_flat)
    u_new = u_new_flat.reshape(dims, N)
    P = phi / dt
    if params.elastic_form == "chemical":
        offset = 0.5 * _grad_sq_faces(cells, d)
        if not limit:
            offset = offset + (np.sum(d * d, axis=0) - 1.0) ** 2 / (4 * eps ** 2)
        P = P - offset

    # --- temperature
    kv, hv = coeffs.k(theta), coeffs.h(theta)
    coef = {}
    for i in range(N):
        Dt = kv[i] * np.eye(dims) + hv[i] * np.outer(d_new[:dims, i], d_new[:dims, i])
        for a in range(dims):
            axis = Dt[a, a] / cells.h[a] ** 2
            for b in range(dims):
                if b != a:
                    axis -= abs(Dt[a, b]) / (cells.h[a] * cells.h[b])
            e = [0] * dims
            e[a] = 1
            coef.setdefault(tuple(e), np.zeros(N))[i] = max(axis, 0.0)
        for a in range(dims):
            for b in range(a + 1, dims):
                hab = cells.h[a] * cells.h[b]
                ep = [0] * dims
                em = [0] * dims
                ep[a] = ep[b] = 1
                em[a], em[b] = 1, -1
                coef.setdefault(tuple(ep), np.zeros(N))[i] = max(Dt[a, b], 0.0) / hab
                coef.setdefault(tuple(em), np.zeros(N))[i] = max(-Dt[a, b], 0.0) / hab
    LD = np.zeros((N, N))
    for shift, cv in coef.items():
        for i, c in enumerate(cells.cells):
            j = cells.index([ck + sk for ck, sk in zip(c, shift)])
            w = 0.5 * (cv[i] + cv[j])
            LD[i, j] += w
            LD[j, i] += w
            LD[i, i] -= w
            LD[j, j] -= w
    Tth = np.zeros(N)
    src = np.zeros(N)
    for i, c in enumerate(cells.cells):
        for a in range(dims):
            j = cells.neighbor(c, a, 1)
            U = 0.5 * (u_new[a, i] + u_new[a, j])
            flux = U * (theta[i] if U > 0 else theta[j])
            Tth[i] += flux / cells.h[a]
            Tth[j] -= flux / cells.h[a]
            du = (u_new[:, j] - u_new[:, i]) / cells.h[a]
            q = 0.5 * (mu[i] + mu[j]) * np.dot(du, du)
            src[i] += 0.5 * q
            src[j] += 0.5 * q
    lapd = np.stack([Lap @ d_new[k] for k in range(3)])
    if limit:
        res = lapd + _grad_sq_faces(cells, d_new) * d_new
    else:
        res = lapd - _gl_force(d_new, eps)
    src += np.sum(res * res, axis=0)
    theta_new = np.linalg.solve(np.eye(N) - dt * LD, theta - dt * Tth + dt * src)

    return (
        np.stack([cells.unflat(u_new[a]) for a in range(dims)]),
        cells.unflat(P),
        np.stack([cells.unflat(d_new[k]) for k in range(3)]),
        cells.unflat(theta_new),
    )
