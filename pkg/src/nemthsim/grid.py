"""Uniform Cartesian grids and the finite-difference operators built on them.

Scalars are arrays of shape ``grid.shape``.  Collocated vector fields carry a
leading component axis, ``(ncomp, *grid.shape)``; the director always has three
components.  Periodic grids are collocated.  Grids with walls store the velocity
on a staggered (MAC) layout, see :mod:`nemthsim.mac`; every other field lives at
cell centres ``(i + 1/2) h``.

Face-located arrays (the output of :func:`face_gradient`) have the same shape
as the cell array; entry ``i`` along axis ``a`` refers to the face between cells
``i`` and ``i + 1``.  On wall grids the last face along each axis is the wall
itself and the first wall face is implicit.
"""

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np
import scipy.sparse as sp

BC_MODES = ("periodic", "walls")


@dataclass(frozen=True)
class Grid:
    extent: tuple
    resolution: tuple
    bc_mode: str = "periodic"

    @property
    def dims(self):
        return len(self.resolution)

    @property
    def shape(self):
        return tuple(self.resolution)

    @property
    def staggered(self):
        return self.bc_mode == "walls"

    @property
    def periodic(self):
        return self.bc_mode == "periodic"

    @cached_property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.extent, self.resolution))

    @property
    def cell_volume(self):
        return math.prod(self.spacing)

    @property
    def volume(self):
        return math.prod(self.extent)

    @property
    def ncells(self):
        return math.prod(self.resolution)

    def cell_centers(self):
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.resolution, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def face_centers(self, axis):
        """Coordinates of the full set of staggered faces normal to ``axis``."""
        axes = []
        for a, (n, h) in enumerate(zip(self.resolution, self.spacing)):
            if a == axis:
                axes.append(np.arange(n + 1) * h)
            else:
                axes.append((np.arange(n) + 0.5) * h)
        return tuple(np.meshgrid(*axes, indexing="ij"))


def build_grid(extent, resolution, bc_mode="periodic", staggering=None):
    """Validate and construct a :class:`Grid`.

    ``staggering`` may be given explicitly ("collocated" or "mac") but must agree
    with the boundary mode: periodic grids are collocated, wall grids are MAC.
    """
    extent = tuple(float(L) for L in extent)
    resolution = tuple(int(n) for n in resolution)
    if len(extent) != len(resolution):
        raise ValueError("extent and resolution must have the same length")
    if len(resolution) not in (2, 3):
        raise ValueError(f"only 2 or 3 dimensions are supported, got {len(resolution)}")
    if any(n < 4 for n in resolution):
        raise ValueError(f"resolution must be at least 4 per axis, got {resolution}")
    if any(not L > 0 or not math.isfinite(L) for L in extent):
        raise ValueError(f"extent must be positive and finite, got {extent}")
    if bc_mode not in BC_MODES:
        raise ValueError(f"bc_mode must be one of {BC_MODES}, got {bc_mode!r}")
    expected = "mac" if bc_mode == "walls" else "collocated"
    if staggering is not None and staggering != expected:
        raise ValueError(f"bc_mode {bc_mode!r} requires staggering {expected!r}, got {staggering!r}")
    return Grid(extent, resolution, bc_mode)


# ---------------------------------------------------------------------------
# ghost cells


def pad(field, grid, parity="even", width=1):
    """Pad the spatial axes with ghost cells.

    Periodic grids wrap.  On wall grids ``even`` mirrors the boundary cell
    (homogeneous Neumann) and ``odd`` mirrors with a sign flip (homogeneous
    Dirichlet at the wall face).
    """
    lead = field.ndim - grid.dims
    widths = [(0, 0)] * lead + [(width, width)] * grid.dims
    if grid.periodic:
        return np.pad(field, widths, mode="wrap")
    out = np.pad(field, widths, mode="symmetric")
    if parity == "odd":
        for a in range(grid.dims):
            ax = lead + a
            lo = [slice(None)] * out.ndim
            hi = [slice(None)] * out.ndim
            lo[ax] = slice(0, width)
            hi[ax] = slice(out.shape[ax] - width, None)
            out[tuple(lo)] *= -1.0
            out[tuple(hi)] *= -1.0
    elif parity != "even":
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    return out


def _shifted(padded, grid, axis, offset, width=1):
    """Interior view of a padded array displaced by ``offset`` along ``axis``."""
    lead = padded.ndim - grid.dims
    idx = [slice(None)] * lead
    for a, n in enumerate(grid.resolution):
        s = width + (offset if a == axis else 0)
        idx.append(slice(s, s + n))
    return padded[tuple(idx)]


# ---------------------------------------------------------------------------
# difference operators


def central_gradient(f, grid, parity="even"):
    """Central differences of every component; result has a new leading axis."""
    p = pad(f, grid, parity)
    return np.stack([
        (_shifted(p, grid, a, 1) - _shifted(p, grid, a, -1)) / (2.0 * h)
        for a, h in enumerate(grid.spacing)
    ])


def central_divergence(v, grid, parity="odd"):
    """Central divergence of a collocated vector field ``(dims, *shape)``."""
    if v.shape[0] != grid.dims:
        raise ValueError(f"expected {grid.dims} components, got {v.shape[0]}")
    out = np.zeros(grid.shape)
    for a, h in enumerate(grid.spacing):
        p = pad(v[a], grid, parity)
        out += (_shifted(p, grid, a, 1) - _shifted(p, grid, a, -1)) / (2.0 * h)
    return out


def laplacian(f, grid, parity="even"):
    """Compact (2 dims + 1)-point Laplacian, applied per component."""
    p = pad(f, grid, parity)
    c = _shifted(p, grid, 0, 0)
    out = np.zeros_like(c)
    for a, h in enumerate(grid.spacing):
        out += (_shifted(p, grid, a, 1) - 2.0 * c + _shifted(p, grid, a, -1)) / (h * h)
    return out


def face_gradient(f, grid):
    """Forward differences onto faces (Neumann on walls: wall faces are zero)."""
    p = pad(f, grid, "even")
    return np.stack([
        (_shifted(p, grid, a, 1) - _shifted(p, grid, a, 0)) / h
        for a, h in enumerate(grid.spacing)
    ])


def face_divergence(F, grid):
    """Backward differences of a face-located field back to cell centres.

    Adjoint (up to sign) of :func:`face_gradient`; on wall grids the implicit
    lower wall face carries zero flux.
    """
    if F.shape[0] != grid.dims:
        raise ValueError(f"expected {grid.dims} face components, got {F.shape[0]}")
    out = np.zeros(F.shape[1:])
    lead = F.ndim - 1 - grid.dims
    for a, h in enumerate(grid.spacing):
        ax = lead + a
        Fa = F[a]
        if grid.periodic:
            prev = np.roll(Fa, 1, axis=ax)
        else:
            prev = np.zeros_like(Fa)
            src = [slice(None)] * Fa.ndim
            dst = [slice(None)] * Fa.ndim
            src[ax] = slice(0, -1)
            dst[ax] = slice(1, None)
            prev[tuple(dst)] = Fa[tuple(src)]
        out += (Fa - prev) / h
    return out


def face_to_cells(q, grid):
    """Average a face-located scalar (per axis) onto cells, summed over axes."""
    out = np.zeros(q.shape[1:])
    lead = q.ndim - 1 - grid.dims
    for a in range(grid.dims):
        ax = lead + a
        qa = q[a]
        if grid.periodic:
            prev = np.roll(qa, 1, axis=ax)
        else:
            prev = np.zeros_like(qa)
            src = [slice(None)] * qa.ndim
            dst = [slice(None)] * qa.ndim
            src[ax] = slice(0, -1)
            dst[ax] = slice(1, None)
            prev[tuple(dst)] = qa[tuple(src)]
        out += 0.5 * (qa + prev)
    return out


def gradient_sq_cells(f, grid):
    """Cell value of sum |forward difference|^2, averaged from adjacent faces.

    Summing this over cells reproduces the face-based Dirichlet energy exactly.
    """
    g = face_gradient(f, grid)
    sq = g * g
    if f.ndim > grid.dims:
        sq = sq.sum(axis=1)
    return face_to_cells(sq, grid)


def diff_op(kind, field, grid, parity="even", location="center"):
    """Dispatch to the difference operators by name.

    ``location="face"`` selects the compact face pair, for which
    ``divergence(gradient(f))`` equals ``laplacian(f)`` exactly.
    """
    if location not in ("center", "face"):
        raise ValueError(f"location must be 'center' or 'face', got {location!r}")
    if kind == "gradient":
        if location == "face":
            return face_gradient(field, grid)
        return central_gradient(field, grid, parity)
    if kind == "divergence":
        if location == "face":
            return face_divergence(field, grid)
        return central_divergence(field, grid, parity)
    if kind == "laplacian":
        return laplacian(field, grid, parity)
    if kind == "director_gradient_tensor":
        if field.shape[0] != 3:
            raise ValueError("director gradient expects a 3-component field")
        # result[a, k] = d_a d^k
        return central_gradient(field, grid, parity)
    raise ValueError(f"unknown operator kind {kind!r}")


# ---------------------------------------------------------------------------
# quadrature


def integrate(field, grid):
    """Midpoint-rule integral over the domain (sums leading components too)."""
    return float(np.sum(field) * grid.cell_volume)


def inner_product(a, b, grid):
    """Discrete L2 inner product; components are contracted."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.vdot(a, b).real * grid.cell_volume)


# ---------------------------------------------------------------------------
# cell graphs (used for implicit operators)


def flat_index(grid):
    return np.arange(grid.ncells).reshape(grid.shape)


def neighbor_pairs(grid, shift):
    """Flat indices ``(i, j)`` of cell pairs with ``j = i + shift``.

    Periodic grids wrap; on wall grids pairs leaving the domain are dropped.
    """
    idx = flat_index(grid)
    if grid.periodic:
        j = np.roll(idx, tuple(-s for s in shift), axis=tuple(range(grid.dims)))
        return idx.ravel(), j.ravel()
    src = []
    dst = []
    for s, n in zip(shift, grid.resolution):
        if s >= 0:
            src.append(slice(0, n - s))
            dst.append(slice(s, n))
        else:
            src.append(slice(-s, n))
            dst.append(slice(0, n + s))
    return idx[tuple(src)].ravel(), idx[tuple(dst)].ravel()


def edge_values(cell_values, grid, shift):
    """Average of a cell quantity over each neighbour pair of ``shift``."""
    i, j = neighbor_pairs(grid, shift)
    flat = np.asarray(cell_values).ravel()
    return 0.5 * (flat[i] + flat[j])


def graph_laplacian(grid, edges):
    """Assemble ``(L f)_i = sum_j w_ij (f_j - f_i)`` from weighted edge sets.

    ``edges`` maps an integer shift to the weights of :func:`neighbor_pairs`
    for that shift.  The result is symmetric with zero row sums.
    """
    n = grid.ncells
    rows = []
    cols = []
    vals = []
    diag = np.zeros(n)
    for shift, w in edges.items():
        i, j = neighbor_pairs(grid, shift)
        w = np.broadcast_to(np.asarray(w, dtype=float), i.shape)
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
        np.add.at(diag, i, -w)
        np.add.at(diag, j, -w)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def axis_shift(grid, a, s=1):
    shift = [0] * grid.dims
    shift[a] = s
    return tuple(shift)


def laplacian_matrix(grid):
    """Sparse compact Laplacian matching :func:`laplacian` (even parity)."""
    return graph_laplacian(
        grid, {axis_shift(grid, a): 1.0 / (h * h) for a, h in enumerate(grid.spacing)}
    )
