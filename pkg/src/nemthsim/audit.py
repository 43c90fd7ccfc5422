"""Energy ledgers, entropy inequalities, weak residuals and maximum principles."""

from dataclasses import dataclass, field, fields
import math

import numpy as np

from .constitutive import energy_flux, heat_flux
from .grid import central_divergence, central_gradient, neighbor_pairs
from .solvers import conduction_edges, heat_sources, heat_transport
from .state import (
    cell_velocity,
    director_residual,
    elastic_energy,
    energy_density,
    entropy_production_cells,
    is_limit,
    kinetic_energy,
    penalty_density,
    velocity_divergence,
    viscous_dissipation_cells,
)

CSV_FIELDS = (
    "t", "e_kin", "e_elastic", "e_penalty", "e_thermal", "e_total", "dissipation_mech",
    "entropy_total", "production_total", "min_theta", "max_norm_d", "min_d3", "div_u_max",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    e_kin: float
    e_elastic: float
    e_penalty: float
    e_thermal: float
    e_total: float
    dissipation_mech: float
    entropy_total: float
    production_total: float
    min_theta: float
    max_norm_d: float
    min_d3: float
    div_u_max: float
    dissipation_viscous: float = 0.0
    dissipation_director: float = 0.0
    min_production: float = 0.0

    @property
    def e_mech(self):
        return self.e_kin + self.e_elastic + self.e_penalty

    def csv_values(self):
        return tuple(getattr(self, name) for name in CSV_FIELDS)


def record_diagnostics(state, coeffs):
    """Energy, dissipation and entropy ledger of one state (read only)."""
    grid = state.grid
    vol = grid.cell_volume
    theta = state.theta
    e_kin = kinetic_energy(grid, state.u)
    e_el = elastic_energy(grid, state.d)
    e_pen = float(np.sum(penalty_density(state.d, state.eps))) * vol
    e_th = float(np.sum(theta)) * vol
    visc = float(np.sum(viscous_dissipation_cells(grid, state.u, coeffs.mu(theta)))) * vol
    r = director_residual(grid, state.d, state.eps)
    ddir = float(np.sum(r * r)) * vol
    prod = entropy_production_cells(state, coeffs)
    norm_d = np.sqrt(np.sum(state.d * state.d, axis=0))
    return DiagnosticsRecord(
        t=float(state.t),
        e_kin=e_kin,
        e_elastic=e_el,
        e_penalty=e_pen,
        e_thermal=e_th,
        e_total=e_kin + e_el + e_pen + e_th,
        dissipation_mech=visc + ddir,
        entropy_total=float(np.sum(1.0 + np.log(theta))) * vol,
        production_total=float(np.sum(prod)) * vol,
        min_theta=float(np.min(theta)),
        max_norm_d=float(np.max(norm_d)),
        min_d3=float(np.min(state.d[2])),
        div_u_max=float(np.max(np.abs(velocity_divergence(grid, state.u)))),
        dissipation_viscous=visc,
        dissipation_director=ddir,
        min_production=float(np.min(prod)),
    )


# ---------------------------------------------------------------------------
# energy law


@dataclass
class EnergyLawReport:
    r_mech: np.ndarray
    r_total: np.ndarray
    integrated_mech: float
    drift_total: float
    mech_increases: list

    @property
    def max_mech(self):
        return float(np.max(np.abs(self.r_mech)))

    @property
    def mean_mech(self):
        return float(np.mean(self.r_mech))

    @property
    def max_total(self):
        return float(np.max(np.abs(self.r_total)))

    @property
    def mean_total(self):
        return float(np.mean(self.r_total))


def energy_law_residual(records, dt, rel_tol=1e-12):
    """Per-step residuals of the mechanical energy law and total energy.

    r_mech(n) = [E(n+1) - E(n)]/dt + 2 D(n+1) with E = |u|^2 + |grad d|^2 + 2F
    (twice the mechanical energy) and D the mechanical dissipation;
    r_total(n) = [e_total(n+1) - e_total(n)]/dt.
    ``mech_increases`` lists steps where E_mech grew beyond round-off.
    """
    if len(records) < 2:
        raise ValueError("energy law residual needs at least two records")
    t = np.array([r.t for r in records])
    steps = np.diff(t)
    if np.any(np.abs(steps - dt) > 1e-9 * dt):
        raise ValueError("records are not uniformly spaced with the given dt")
    em = np.array([r.e_mech for r in records])
    et = np.array([r.e_total for r in records])
    diss = np.array([r.dissipation_mech for r in records])
    r_mech = 2.0 * np.diff(em) / dt + 2.0 * diss[1:]
    r_total = np.diff(et) / dt
    # round-off floor relative to the energy scale of the run
    floor = rel_tol * max(float(np.max(np.abs(em))), abs(float(et[0])))
    incr = [n for n in range(len(em) - 1) if em[n + 1] - em[n] > max(rel_tol * abs(em[n]), floor)]
    return EnergyLawReport(r_mech, r_total, float(dt * np.sum(r_mech)), float(et[-1] - et[0]), incr)


# ---------------------------------------------------------------------------
# concave test functions


@dataclass(frozen=True, eq=False)
class ConcaveTestFn:
    """Non-decreasing concave H with closed-form derivatives.

    Kinds: ``identity`` (theta), ``power`` ((1+theta)^alpha - 1, 0 < alpha < 1),
    ``log`` (ln(1+theta)) or ``custom`` with user callables.
    """

    kind: str
    alpha: float = 0.5
    H: object = None
    dH: object = None
    d2H: object = None

    def __post_init__(self):
        a = self.alpha
        if self.kind == "identity":
            fns = (lambda th: np.asarray(th, dtype=float) + 0.0,
                   lambda th: np.ones_like(np.asarray(th, dtype=float)),
                   lambda th: np.zeros_like(np.asarray(th, dtype=float)))
        elif self.kind == "power":
            if not 0.0 < a < 1.0:
                raise ValueError(f"power test function needs 0 < alpha < 1, got {a}")
            fns = (lambda th: (1.0 + th) ** a - 1.0,
                   lambda th: a * (1.0 + th) ** (a - 1.0),
                   lambda th: a * (a - 1.0) * (1.0 + th) ** (a - 2.0))
        elif self.kind == "log":
            fns = (lambda th: np.log1p(th), lambda th: 1.0 / (1.0 + th), lambda th: -1.0 / (1.0 + th) ** 2)
        elif self.kind == "custom":
            if self.H is None or self.dH is None or self.d2H is None:
                raise ValueError("custom test function needs H, dH and d2H")
            fns = (self.H, self.dH, self.d2H)
        else:
            raise ValueError(f"unknown test function kind {self.kind!r}")
        object.__setattr__(self, "H", fns[0])
        object.__setattr__(self, "dH", fns[1])
        object.__setattr__(self, "d2H", fns[2])
        sample = np.concatenate([np.logspace(-6, 4, 201), np.linspace(0.01, 10.0, 200)])
        if np.any(self.dH(sample) < 0.0):
            raise ValueError(f"test function {self.kind!r} is not non-decreasing on the sample")
        if np.any(self.d2H(sample) > 0.0):
            raise ValueError(f"test function {self.kind!r} is not concave on the sample")
        vals = self.H(sample)
        if np.any(np.diff(np.sort(sample)) < 0) or np.any(np.diff(vals[np.argsort(sample)]) < -1e-12):
            raise ValueError(f"test function {self.kind!r} is decreasing on the sample")

    @property
    def label(self):
        return f"power({self.alpha:g})" if self.kind == "power" else self.kind


def default_test_functions():
    return [ConcaveTestFn("power", 0.5), ConcaveTestFn("log")]


# ---------------------------------------------------------------------------
# space-time test fields


def time_cutoff(t, T):
    t = np.asarray(t, dtype=float)
    return np.where(t < T, np.cos(0.5 * np.pi * t / T) ** 2, 0.0)


def time_cutoff_rate(t, T):
    t = np.asarray(t, dtype=float)
    return np.where(t < T, -0.5 * np.pi / T * np.sin(np.pi * t / T), 0.0)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """chi(t) g(x) with ``g`` and its gradient given in closed form.

    ``value(coords)`` returns the spatial factor, ``gradient(coords)`` its
    derivatives stacked on a new leading axis (``[j]`` = d/dx_j).
    """

    name: str
    value: object
    gradient: object
    T: float

    def at(self, coords, t):
        return float(time_cutoff(t, self.T)) * self.value(coords)

    def rate(self, coords, t):
        return float(time_cutoff_rate(t, self.T)) * self.value(coords)

    def grad(self, coords, t):
        return float(time_cutoff(t, self.T)) * self.gradient(coords)


@dataclass(frozen=True, eq=False)
class TestFieldSet:
    phi: list
    psi1: list
    psi2: list
    T: float


def _stream_mode(grid, m, kind, T):
    """Velocity from the stream function sin(mX) sin(mY) or cos(mX) cos(mY)."""
    Lx, Ly = grid.extent[0], grid.extent[1]
    ax, ay = 2 * np.pi * m / Lx, 2 * np.pi * m / Ly
    dims = grid.dims

    if kind == "sin":
        def value(c):
            x, y = c[0], c[1]
            out = np.zeros((dims,) + x.shape)
            out[0] = ay * np.sin(ax * x) * np.cos(ay * y)
            out[1] = -ax * np.cos(ax * x) * np.sin(ay * y)
            return out

        def gradient(c):
            x, y = c[0], c[1]
            g = np.zeros((dims, dims) + x.shape)
            g[0, 0] = ay * ax * np.cos(ax * x) * np.cos(ay * y)
            g[1, 0] = -ay * ay * np.sin(ax * x) * np.sin(ay * y)
            g[0, 1] = ax * ax * np.sin(ax * x) * np.sin(ay * y)
            g[1, 1] = -ax * ay * np.cos(ax * x) * np.cos(ay * y)
            return g
    else:
        def value(c):
            x, y = c[0], c[1]
            out = np.zeros((dims,) + x.shape)
            out[0] = -ay * np.cos(ax * x) * np.sin(ay * y)
            out[1] = ax * np.sin(ax * x) * np.cos(ay * y)
            return out

        def gradient(c):
            x, y = c[0], c[1]
            g = np.zeros((dims, dims) + x.shape)
            g[0, 0] = ay * ax * np.sin(ax * x) * np.sin(ay * y)
            g[1, 0] = -ay * ay * np.cos(ax * x) * np.cos(ay * y)
            g[0, 1] = ax * ax * np.cos(ax * x) * np.cos(ay * y)
            g[1, 1] = -ax * ay * np.sin(ax * x) * np.sin(ay * y)
            return g

    return SpaceTimeField(f"phi_{kind}{m}", value, gradient, T)


def _trig_vector(grid, m, T):
    """(sin(mX) cos(Y), cos(mY), sin(X + mY)) and its gradient."""
    Lx, Ly = grid.extent[0], grid.extent[1]
    kx, ky = 2 * np.pi / Lx, 2 * np.pi / Ly
    dims = grid.dims

    def value(c):
        x, y = c[0], c[1]
        return np.stack([np.sin(m * kx * x) * np.cos(ky * y), np.cos(m * ky * y),
                         np.sin(kx * x + m * ky * y)])

    def gradient(c):
        x, y = c[0], c[1]
        g = np.zeros((dims, 3) + x.shape)
        g[0, 0] = m * kx * np.cos(m * kx * x) * np.cos(ky * y)
        g[1, 0] = -ky * np.sin(m * kx * x) * np.sin(ky * y)
        g[1, 1] = -m * ky * np.sin(m * ky * y)
        g[0, 2] = kx * np.cos(kx * x + m * ky * y)
        g[1, 2] = m * ky * np.cos(kx * x + m * ky * y)
        return g

    return SpaceTimeField(f"psi1_{m}", value, gradient, T)


def _bump(grid, m, T):
    """1 + cos(mX) cos(mY)/2 (m = 0 gives the constant one)."""
    Lx, Ly = grid.extent[0], grid.extent[1]
    ax, ay = 2 * np.pi * m / Lx, 2 * np.pi * m / Ly
    dims = grid.dims

    def value(c):
        return 1.0 + 0.5 * np.cos(ax * c[0]) * np.cos(ay * c[1])

    def gradient(c):
        g = np.zeros((dims,) + c[0].shape)
        g[0] = -0.5 * ax * np.sin(ax * c[0]) * np.cos(ay * c[1])
        g[1] = -0.5 * ay * np.cos(ax * c[0]) * np.sin(ay * c[1])
        return g

    return SpaceTimeField(f"psi2_{m}", value, gradient, T)


def default_test_fields(grid, T):
    """Trigonometric catalog (degree <= 3) with the time cutoff cos^2(pi t / 2T).

    Velocity test fields are exactly solenoidal for the central divergence
    when the first two axes have equal resolution.
    """
    phi = []
    if grid.periodic:
        phi = [_stream_mode(grid, m, kind, T) for m in (1, 2, 3) for kind in ("sin", "cos")]
        coords = grid.cell_centers()
        for f in phi:
            div = np.max(np.abs(central_divergence(f.value(coords), grid)))
            if div > 1e-12 * max(1.0, float(np.max(np.abs(f.value(coords))))):
                raise ValueError(f"test field {f.name} is not discretely solenoidal on this grid "
                                 f"(divergence {div:.2e}); use equal resolution on the first two axes")
    psi1 = [_trig_vector(grid, m, T) for m in (1, 2, 3)]
    psi2 = [_bump(grid, m, T) for m in (0, 1, 2)]
    return TestFieldSet(phi, psi1, psi2, T)


# ---------------------------------------------------------------------------
# entropy inequality


ENTROPY_TERMS = ("time", "initial", "terminal", "transport", "flux", "source", "curvature")


@dataclass
class EntropyResidual:
    value: float
    terms: dict
    scale: float
    tol: float

    @property
    def passed(self):
        return self.value <= self.tol * self.scale


class EntropyLedger:
    """Accumulates the discrete weak entropy inequality along a trajectory.

    Per step and cell the scheme gives
    ``psi^{n+1} [dt H'(theta^{n+1}) (-T + L theta^{n+1} + s) - (H^{n+1} - H^n)] <= 0``
    by concavity.  Summation by parts in time splits the total into the
    pieces of the weak inequality (LHS - RHS):

    time       sum_n H^n (psi^{n+1} - psi^n)         ~ int int H d_t psi
    initial    H^0 psi^0                             ~ int H(theta_0) psi(0)
    terminal   -H^N psi^N                            (zero with the cutoff)
    transport  -dt psi H' div(U theta)               ~ int int H u . grad psi
    flux       -dt w (dtheta) avg(H') (dpsi)         ~ int int H' q . grad psi
    curvature  -dt w (dtheta) avg(psi) (dH')         ~ int int H'' q . grad theta psi
    source     dt psi H' s                           ~ int int H' (dissipation) psi
    """

    def __init__(self, grid, H, psi2, coeffs, tol=1e-6):
        self.grid = grid
        self.H = H
        self.psi2 = psi2
        self.coeffs = coeffs
        self.tol = tol
        self.coords = grid.cell_centers()
        self.terms = {k: 0.0 for k in ENTROPY_TERMS}
        self.direct = 0.0
        self.last = None
        self.started = False

    def _psi(self, t):
        psi = self.psi2.at(self.coords, t)
        if np.any(psi < 0.0):
            raise ValueError(f"test field {self.psi2.name} is negative")
        return psi

    def add_step(self, s0, s1, pieces=None):
        grid = self.grid
        vol = grid.cell_volume
        dt = s1.t - s0.t
        if pieces is None:
            pieces = step_pieces(s0, s1, self.coeffs)
        edges, T, src = pieces
        H = self.H
        psi0 = self._psi(s0.t)
        psi1 = self._psi(s1.t)
        H0 = H.H(s0.theta)
        H1 = H.H(s1.theta)
        dH1 = H.dH(s1.theta)
        if not self.started:
            self.terms["initial"] += vol * float(np.sum(H0 * psi0))
            self.started = True
        self.terms["time"] += vol * float(np.sum(H0 * (psi1 - psi0)))
        self.terms["transport"] += -dt * vol * float(np.sum(psi1 * dH1 * T))
        self.terms["source"] += dt * vol * float(np.sum(psi1 * dH1 * src))
        th = s1.theta.ravel()
        pf = psi1.ravel()
        hf = dH1.ravel()
        flux = 0.0
        curv = 0.0
        for shift, w in edges.items():
            i, j = neighbor_pairs(grid, shift)
            dth = th[j] - th[i]
            flux += float(np.sum(w * dth * 0.5 * (hf[i] + hf[j]) * (pf[j] - pf[i])))
            curv += float(np.sum(w * dth * 0.5 * (pf[i] + pf[j]) * (hf[j] - hf[i])))
        self.terms["flux"] += -dt * vol * flux
        self.terms["curvature"] += -dt * vol * curv
        self.direct += vol * float(np.sum(psi1 * (dH1 * (s1.theta - s0.theta) - (H1 - H0))))
        self.last = (s1, psi1, H1)

    def finalize(self):
        if self.last is None:
            raise ValueError("entropy ledger needs at least one step")
        _, psiN, HN = self.last
        terms = dict(self.terms)
        terms["terminal"] = -self.grid.cell_volume * float(np.sum(HN * psiN))
        value = math.fsum(terms.values())
        scale = max(abs(v) for v in terms.values())
        return EntropyResidual(value, terms, scale, self.tol)


def step_pieces(s0, s1, coeffs):
    """Scheme operators of the temperature update between two states."""
    grid = s0.grid
    edges, _ = conduction_edges(grid, s0.theta, s1.d, coeffs)
    T = heat_transport(grid, s1.u, s0.theta)
    src = heat_sources(grid, s0.theta, s1.u, s1.d, coeffs, s0.eps)
    return edges, T, src


def entropy_inequality_residual(trajectory, H, psi2, coeffs, tol=1e-6):
    """LHS - RHS of the discrete weak entropy inequality (<= tol * scale expected).

    ``trajectory`` must hold consecutive solver states (every step).
    """
    if len(trajectory) < 2:
        raise ValueError("entropy residual needs at least two states")
    ledger = EntropyLedger(trajectory[0].grid, H, psi2, coeffs, tol)
    for s0, s1 in zip(trajectory[:-1], trajectory[1:]):
        ledger.add_step(s0, s1)
    return ledger.finalize()


# ---------------------------------------------------------------------------
# weak residuals


@dataclass
class WeakResiduals:
    momentum: dict
    director: dict

    def max_abs(self):
        vals = list(self.momentum.values()) + list(self.director.values())
        return max(abs(v) for v in vals) if vals else 0.0


def _trapezoid_weights(times):
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def weak_residuals(trajectory, testset, coeffs, forcing=None):
    """Space-time quadrature of the weak momentum and director equations.

    Residual = LHS - RHS of
    int int (u . d_t phi + u (x) u : grad phi) - (mu grad u - grad d . grad d) : grad phi
        + int u_0 . phi(0) + int int f_u . phi
    and
    int int (d . d_t psi + u (x) d : grad psi) - (grad d : grad psi + f(d) . psi)
        + int d_0 . psi(0) + int int f_d . psi
    where ``forcing`` optionally supplies ``{"u": f(coords, t), "d": f(coords, t)}``.
    """
    grid = trajectory[0].grid
    if not grid.periodic:
        raise ValueError("weak residuals are evaluated on periodic grids")
    vol = grid.cell_volume
    coords = grid.cell_centers()
    times = [s.t for s in trajectory]
    wts = _trapezoid_weights(times)
    forcing = forcing or {}
    mom = {f.name: 0.0 for f in testset.phi}
    dirr = {f.name: 0.0 for f in testset.psi1}
    for f in testset.phi:
        div = np.max(np.abs(central_divergence(f.value(coords), grid)))
        if div > 1e-12 * max(1.0, float(np.max(np.abs(f.value(coords))))):
            raise ValueError(f"momentum test field {f.name} is not divergence free ({div:.2e})")
    for n, (s, wt) in enumerate(zip(trajectory, wts)):
        t = s.t
        u = cell_velocity(grid, s.u)
        gu = central_gradient(u, grid)          # [j, i] = d_j u_i
        gd = central_gradient(s.d, grid)        # [j, k] = d_j d^k
        S = np.einsum("ik...,jk...->ij...", gd, gd)
        mu = coeffs.mu(s.theta)
        fu = forcing["u"](coords, t) if "u" in forcing else None
        fd = forcing["d"](coords, t) if "d" in forcing else None
        if is_limit(s.eps):
            react = -np.sum(gd * gd, axis=(0, 1)) * s.d
        else:
            from .constitutive import ginzburg_landau_force
            react = ginzburg_landau_force(s.d, s.eps)
        for f in testset.phi:
            phi = f.at(coords, t)
            gphi = f.grad(coords, t)             # [j, i] = d_j phi_i
            dens = (np.sum(u * f.rate(coords, t), axis=0)
                    + np.einsum("i...,j...,ji...->...", u, u, gphi)
                    - mu * np.einsum("ji...,ji...->...", gu, gphi)
                    + np.einsum("ij...,ji...->...", S, gphi))
            if fu is not None:
                dens = dens + np.sum(fu * phi, axis=0)
            val = wt * vol * float(np.sum(dens))
            if n == 0:
                val += vol * float(np.sum(u * phi))
            mom[f.name] += val
        for f in testset.psi1:
            psi = f.at(coords, t)
            gpsi = f.grad(coords, t)             # [j, k]
            dens = (np.sum(s.d * f.rate(coords, t), axis=0)
                    + np.einsum("j...,k...,jk...->...", u, s.d, gpsi)
                    - np.einsum("jk...,jk...->...", gd, gpsi)
                    - np.sum(react * psi, axis=0))
            if fd is not None:
                dens = dens + np.sum(fd * psi, axis=0)
            val = wt * vol * float(np.sum(dens))
            if n == 0:
                val += vol * float(np.sum(s.d * psi))
            dirr[f.name] += val
    return WeakResiduals(mom, dirr)


# ---------------------------------------------------------------------------
# maximum principles


@dataclass
class MaxPrincipleReport:
    max_norm_d: np.ndarray
    min_d3: np.ndarray
    min_theta: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def max_principle_monitor(trajectory, tol=1e-10):
    """Worst-case |d|, d3 and theta per step, with excursions flagged.

    Accepts States or DiagnosticsRecords.  The |d| <= 1 and d3 >= 0 checks
    apply when the initial data satisfy them; the temperature floor is the
    initial minimum.
    """
    def extrema(x):
        if isinstance(x, DiagnosticsRecord):
            return x.max_norm_d, x.min_d3, x.min_theta
        return (float(np.max(np.sqrt(np.sum(x.d * x.d, axis=0)))), float(np.min(x.d[2])),
                float(np.min(x.theta)))

    ext = np.array([extrema(x) for x in trajectory])
    rep = MaxPrincipleReport(ext[:, 0], ext[:, 1], ext[:, 2])
    check_norm = ext[0, 0] <= 1.0 + tol
    check_hemi = ext[0, 1] >= -tol
    floor = ext[0, 2]
    for n, (nd, d3, th) in enumerate(ext):
        if check_norm and nd > 1.0 + tol:
            rep.violations.append((n, "max_norm_d", float(nd)))
        if check_hemi and d3 < -tol:
            rep.violations.append((n, "min_d3", float(d3)))
        if th < floor - tol:
            rep.violations.append((n, "min_theta", float(th)))
    return rep


# ---------------------------------------------------------------------------
# pointwise first law


def first_law_pointwise_residual(s0, s1, coeffs, dt=None, forcing_work=None):
    """Residual of D e/Dt + div(Sigma + q) = W between two states, per cell.

    Spatial terms use midpoint averages of the two states; ``forcing_work`` is
    an array or a callable ``(coords, t)`` giving the power W of any external
    forcing (zero for the unforced system).  Values at cells touching walls
    are not meaningful.
    """
    grid = s0.grid
    dt = (s1.t - s0.t) if dt is None else dt
    eps = s0.eps
    u0 = cell_velocity(grid, s0.u)
    u1 = cell_velocity(grid, s1.u)
    um = 0.5 * (u0 + u1)
    dm = 0.5 * (s0.d + s1.d)
    thm = 0.5 * (s0.theta + s1.theta)
    Pm = 0.5 * (s0.P + s1.P)
    e0 = energy_density(grid, s0.u, s0.d, s0.theta, eps)
    e1 = energy_density(grid, s1.u, s1.d, s1.theta, eps)
    em = 0.5 * (e0 + e1)
    gd = central_gradient(dm, grid, "even")
    gu = central_gradient(um, grid, "odd")
    dmat = (s1.d - s0.d) / dt + np.einsum("a...,ak...->k...", um, gd)
    sigma = energy_flux(Pm, um, gu, gd, dmat, coeffs.mu(thm))
    gth = central_gradient(thm, grid, "even")
    q = heat_flux(gth, dm, coeffs.k(thm), coeffs.h(thm))
    ge = central_gradient(em, grid, "even")
    res = (e1 - e0) / dt + np.sum(um * ge, axis=0) + central_divergence(sigma + q, grid, "odd")
    if forcing_work is not None:
        W = forcing_work(grid.cell_centers(), 0.5 * (s0.t + s1.t)) if callable(forcing_work) else forcing_work
        res = res - W
    return res


def interior_mask(grid, width=2):
    """Cells at least ``width`` cells away from any wall (all cells if periodic)."""
    mask = np.ones(grid.shape, dtype=bool)
    if grid.periodic:
        return mask
    for a, n in enumerate(grid.resolution):
        idx = np.arange(n)
        keep = (idx >= width) & (idx < n - width)
        shape = [1] * grid.dims
        shape[a] = n
        mask &= keep.reshape(shape)
    return mask


def mechanical_energy(record):
    return record.e_mech


def records_table(records):
    """Column arrays keyed by field name."""
    return {f.name: np.array([getattr(r, f.name) for r in records]) for f in fields(DiagnosticsRecord)}
