"""Staggered (MAC) velocity operators for no-slip wall boxes.

Component ``a`` of the velocity lives on the faces normal to axis ``a``; its
array has ``n_a + 1`` entries along that axis, the first and last being wall
faces that stay zero.  Unknowns are the interior faces only.  Tangential no-slip
is imposed through odd ghost values, which give the half-weighted wall edges of
the viscous form below.
"""

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .grid import graph_laplacian, axis_shift
from .linalg import factorize


def face_shape(grid, a):
    shape = list(grid.shape)
    shape[a] += 1
    return tuple(shape)


def interior_shape(grid, a):
    shape = list(grid.shape)
    shape[a] -= 1
    return tuple(shape)


def zero_velocity(grid):
    return tuple(np.zeros(face_shape(grid, a)) for a in range(grid.dims))


def _take(arr, axis, sl):
    idx = [slice(None)] * arr.ndim
    idx[axis] = sl
    return arr[tuple(idx)]


def interior(grid, ua, a):
    return _take(ua, a, slice(1, -1))


def boundary_flux(grid, u):
    """Largest normal velocity found on any wall face."""
    worst = 0.0
    for a in range(grid.dims):
        worst = max(worst, float(np.max(np.abs(_take(u[a], a, slice(0, 1))))),
                    float(np.max(np.abs(_take(u[a], a, slice(-1, None))))))
    return worst


def divergence(grid, u):
    out = np.zeros(grid.shape)
    for a, h in enumerate(grid.spacing):
        out += np.diff(u[a], axis=a) / h
    return out


def gradient(grid, phi):
    out = []
    for a, h in enumerate(grid.spacing):
        g = np.zeros(face_shape(grid, a))
        idx = [slice(None)] * grid.dims
        idx[a] = slice(1, -1)
        g[tuple(idx)] = np.diff(phi, axis=a) / h
        out.append(g)
    return tuple(out)


def to_cells(grid, u):
    """Average face velocities onto cell centres, shape ``(dims, *shape)``."""
    return np.stack([
        0.5 * (_take(u[a], a, slice(0, -1)) + _take(u[a], a, slice(1, None)))
        for a in range(grid.dims)
    ])


def from_cells(grid, F):
    """Adjoint of :func:`to_cells` restricted to interior faces."""
    out = []
    for a in range(grid.dims):
        g = np.zeros(face_shape(grid, a))
        idx = [slice(None)] * grid.dims
        idx[a] = slice(1, -1)
        g[tuple(idx)] = 0.5 * (_take(F[a], a, slice(0, -1)) + _take(F[a], a, slice(1, None)))
        out.append(g)
    return tuple(out)


def pack(grid, u):
    return np.concatenate([interior(grid, u[a], a).ravel() for a in range(grid.dims)])


def unpack(grid, vec):
    out = []
    start = 0
    for a in range(grid.dims):
        ishape = interior_shape(grid, a)
        n = int(np.prod(ishape))
        g = np.zeros(face_shape(grid, a))
        idx = [slice(None)] * grid.dims
        idx[a] = slice(1, -1)
        g[tuple(idx)] = vec[start:start + n].reshape(ishape)
        out.append(g)
        start += n
    return tuple(out)


def unknown_counts(grid):
    return [int(np.prod(interior_shape(grid, a))) for a in range(grid.dims)]


def _face_numbering(grid, a):
    """Flat unknown number of every face of component ``a`` (-1 on walls)."""
    num = -np.ones(face_shape(grid, a), dtype=np.int64)
    idx = [slice(None)] * grid.dims
    idx[a] = slice(1, -1)
    num[tuple(idx)] = np.arange(int(np.prod(interior_shape(grid, a)))).reshape(interior_shape(grid, a))
    return num


def _lookup(table, index, valid):
    """Gather ``table[index]`` where ``valid`` else -1; ``index`` is a tuple."""
    safe = tuple(np.where(valid, ix, 0) for ix in index)
    return np.where(valid, table[safe], -1)


# ---------------------------------------------------------------------------
# pressure


class _Poisson:
    def __init__(self, grid):
        L = graph_laplacian(
            grid, {axis_shift(grid, a): 1.0 / (h * h) for a, h in enumerate(grid.spacing)}
        ).tolil()
        # The Neumann problem fixes the solution only up to a constant; pin
        # cell 0.  Row 0 is implied by the others when the data has zero mean.
        L[0, :] = 0.0
        L[0, 0] = 1.0
        self.lu = factorize(L.tocsc(), "pressure Poisson")

    def solve(self, rhs):
        b = rhs.ravel().copy()
        b[0] = 0.0
        phi = self.lu(b)
        return phi - phi.mean()


@lru_cache(maxsize=8)
def poisson(grid):
    return _Poisson(grid)


def project(grid, u_star):
    """Discrete Leray projection; returns the projected field and potential."""
    scale = max(1.0, max(float(np.max(np.abs(c))) for c in u_star))
    if boundary_flux(grid, u_star) > 1e-12 * scale:
        raise ValueError("no-slip walls require zero normal velocity on wall faces; "
                         "boundary data with nonzero flux cannot be projected")
    u_star = tuple(np.array(c, dtype=float) for c in u_star)
    for a in range(grid.dims):
        _take(u_star[a], a, slice(0, 1))[...] = 0.0
        _take(u_star[a], a, slice(-1, None))[...] = 0.0
    phi = poisson(grid).solve(divergence(grid, u_star)).reshape(grid.shape)
    g = gradient(grid, phi)
    return tuple(u_star[a] - g[a] for a in range(grid.dims)), phi


# ---------------------------------------------------------------------------
# viscous form


def viscous_parts(grid, mu_cells):
    """Velocity gradient matrices, weights and cell distribution per component.

    For component ``a`` returns ``(G, w, R)``: ``G`` maps interior unknowns to
    gradient samples, ``w`` holds quadrature weight times viscosity at each
    sample and ``R`` (cells x samples, columns summing to one) assigns each
    sample's dissipation to the cells around it.
    """
    parts = []
    n = grid.shape
    cell_num = np.arange(grid.ncells).reshape(n)
    for a in range(grid.dims):
        num = _face_numbering(grid, a)
        nunk = int(np.prod(interior_shape(grid, a)))
        Gblocks, wblocks, Rblocks = [], [], []
        for b in range(grid.dims):
            hb = grid.spacing[b]
            if b == a:
                loc = np.indices(n)
                nloc = grid.ncells
                rows, cols, vals = [], [], []
                lid = np.arange(nloc)
                for off, sgn in ((1, 1.0), (0, -1.0)):
                    ix = list(loc)
                    ix[a] = loc[a] + off
                    col = num[tuple(ix)].ravel()
                    ok = col >= 0
                    rows.append(lid[ok])
                    cols.append(col[ok])
                    vals.append(np.full(ok.sum(), sgn / hb))
                G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(nloc, nunk))
                w = mu_cells.ravel().copy()
                R = sp.csr_matrix((np.ones(nloc), (cell_num.ravel(), lid)), shape=(grid.ncells, nloc))
            else:
                lshape = list(n)
                lshape[a] -= 1
                lshape[b] += 1
                loc = np.indices(lshape)
                loc[a] += 1  # full face index along a
                nloc = int(np.prod(lshape))
                lid = np.arange(nloc).reshape(lshape)
                j = loc[b]
                rows, cols, vals = [], [], []
                # sample = (u[j] - u[j-1]) / h with odd ghosts at both walls
                upper = j <= n[b] - 1
                ix = list(loc)
                ix[b] = np.minimum(j, n[b] - 1)
                c_up = _lookup(num, tuple(ix), upper)
                coef_up = np.where(j == 0, 2.0, 1.0) / hb
                lower = j >= 1
                ix = list(loc)
                ix[b] = np.maximum(j - 1, 0)
                c_lo = _lookup(num, tuple(ix), lower)
                coef_lo = -np.where(j == n[b], 2.0, 1.0) / hb
                for c, coef in ((c_up, coef_up), (c_lo, coef_lo)):
                    ok = c >= 0
                    rows.append(lid[ok])
                    cols.append(c[ok])
                    vals.append(coef[ok])
                G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(nloc, nunk))
                weight = np.where((j == 0) | (j == n[b]), 0.5, 1.0)
                # neighbouring cells: a-index in {i-1, i}, b-index in {j-1, j}
                mu_sum = np.zeros(lshape)
                count = np.zeros(lshape)
                rr, cc = [], []
                for da in (-1, 0):
                    for db in (-1, 0):
                        ix = list(loc)
                        ix[a] = loc[a] + da
                        ix[b] = j + db
                        ok = (ix[b] >= 0) & (ix[b] <= n[b] - 1)
                        cid = _lookup(cell_num, tuple(ix), ok)
                        mu_sum += np.where(ok, mu_cells[tuple(np.where(ok, q, 0) for q in ix)], 0.0)
                        count += ok
                        rr.append(cid[ok])
                        cc.append(lid[ok])
                w = (weight * mu_sum / count).ravel()
                rr = np.concatenate(rr)
                cc = np.concatenate(cc)
                R = sp.csr_matrix((1.0 / count.ravel()[cc], (rr, cc)), shape=(grid.ncells, nloc))
            Gblocks.append(G)
            wblocks.append(w)
            Rblocks.append(R)
        parts.append((sp.vstack(Gblocks).tocsr(), np.concatenate(wblocks), sp.hstack(Rblocks).tocsr()))
    return parts


def viscous_matrix(parts):
    """Block-diagonal ``-G^T W G`` over all components (negative semidefinite)."""
    return sp.block_diag([-(G.T @ sp.diags(w) @ G) for G, w, _ in parts]).tocsr()


def viscous_dissipation_cells(grid, parts, u):
    out = np.zeros(grid.ncells)
    for a, (G, w, R) in enumerate(parts):
        g = G @ interior(grid, u[a], a).ravel()
        out += R @ (w * g * g)
    return out.reshape(grid.shape)


# ---------------------------------------------------------------------------
# skew-symmetric convection


def convection_matrix(grid, U):
    """Skew part of the centred flux-form convection by the face field ``U``.

    Returns a block-diagonal sparse matrix acting on :func:`pack` vectors.
    The matrix is exactly antisymmetric, so convection does no work.
    """
    n = grid.shape
    blocks = []
    for a in range(grid.dims):
        num = _face_numbering(grid, a)
        nunk = int(np.prod(interior_shape(grid, a)))
        rows, cols, vals = [], [], []
        for b in range(grid.dims):
            hb = grid.spacing[b]
            if b == a:
                loc = np.indices(n)  # cell c between faces c and c+1 along a
                Ua = U[a]
                Ut = 0.5 * (_take(Ua, a, slice(0, -1)) + _take(Ua, a, slice(1, None)))
                ix_lo = list(loc)
                ix_hi = list(loc)
                ix_hi[a] = loc[a] + 1
                f_lo = num[tuple(ix_lo)]
                f_hi = num[tuple(ix_hi)]
                # flux = Ut * (w_lo + w_hi) / 2; enters row f_hi with +, f_lo with -
                for r, sgn in ((f_hi, 1.0), (f_lo, -1.0)):
                    for c in (f_lo, f_hi):
                        ok = (r >= 0) & (c >= 0)
                        rows.append(r[ok])
                        cols.append(c[ok])
                        vals.append((sgn * 0.5 * Ut / hb)[ok])
            else:
                lshape = list(n)
                lshape[a] -= 1
                lshape[b] += 1
                loc = np.indices(lshape)
                loc[a] += 1
                j = loc[b]
                Ub = U[b]
                # U_b lives at (cell index along a, face index along b)
                ix1 = list(loc)
                ix1[a] = loc[a] - 1
                ix2 = list(loc)
                Ut = 0.5 * (Ub[tuple(ix1)] + Ub[tuple(ix2)])
                okl = j >= 1
                ixl = list(loc)
                ixl[b] = np.maximum(j - 1, 0)
                f_l = _lookup(num, tuple(ixl), okl)
                oku = j <= n[b] - 1
                ixu = list(loc)
                ixu[b] = np.minimum(j, n[b] - 1)
                f_u = _lookup(num, tuple(ixu), oku)
                # flux at edge j enters face j-1 with + and face j with -
                for r, sgn in ((f_l, 1.0), (f_u, -1.0)):
                    for c in (f_l, f_u):
                        ok = (r >= 0) & (c >= 0)
                        rows.append(r[ok])
                        cols.append(c[ok])
                        vals.append((sgn * 0.5 * Ut / hb)[ok])
        M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nunk, nunk))
        blocks.append(0.5 * (M - M.T))
    return sp.block_diag(blocks).tocsr()
