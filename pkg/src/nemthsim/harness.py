"""Scenarios, the audited run loop, the eps-sweep and comparison experiments."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
import math
import os
from pathlib import Path

import numpy as np

from . import audit
from .constitutive import CoefficientSpec, CoefficientSet, validate_coefficients
from .galerkin import (
    GalerkinBlowUp,
    assemble_ode,
    build_basis,
    convection_tensor,
    integrate_galerkin,
    project_velocity,
    reconstruct_velocity,
)
from .grid import build_grid, central_gradient, face_gradient
from .linalg import SolverError
from .oracle import dense_coupled_step
from .solvers import SchemeError, StepParams, advance, project
from .state import LIMIT, State, cell_velocity, is_limit, normalize_eps, penalty_density

# ---------------------------------------------------------------------------
# initial data


U0_KINDS = ("zero", "taylor-green", "cavity", "random")
D0_KINDS = ("uniform", "tilted-hemisphere", "random")
THETA0_KINDS = ("constant", "bump", "random")


@dataclass(frozen=True)
class InitialSpec:
    """Presets for velocity, director and temperature.

    u0: zero | taylor-green | cavity (walls) | random, scaled by ``u0_amp``.
    d0: uniform (0, 0, 1) | tilted-hemisphere with polar angle up to ``d0_tilt``
        | random unit vectors; ``hemisphere`` requires d3 >= 0 everywhere.
    theta0: constant ``theta0_min`` | bump with minimum ``theta0_min`` and
        height ``theta0_amp`` | random in [theta0_min, theta0_min + theta0_amp].
    """

    u0: str = "zero"
    u0_amp: float = 1.0
    d0: str = "uniform"
    d0_tilt: float = 1.2
    hemisphere: bool = True
    theta0: str = "constant"
    theta0_min: float = 1.0
    theta0_amp: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.u0 not in U0_KINDS:
            raise ValueError(f"initial.u0: unknown preset {self.u0!r}; choose from {U0_KINDS}")
        if self.d0 not in D0_KINDS:
            raise ValueError(f"initial.d0: unknown preset {self.d0!r}; choose from {D0_KINDS}")
        if self.theta0 not in THETA0_KINDS:
            raise ValueError(f"initial.theta0: unknown preset {self.theta0!r}; choose from {THETA0_KINDS}")
        if not self.theta0_min > 0:
            raise ValueError("initial.theta0_min: initial temperature must satisfy ess inf theta0 > 0, "
                             f"got {self.theta0_min}")
        if self.theta0_amp < 0:
            raise ValueError("initial.theta0_amp: must be nonnegative")
        if self.hemisphere and self.d0 == "tilted-hemisphere" and not 0 <= self.d0_tilt <= math.pi / 2:
            raise ValueError("initial.d0_tilt: hemisphere data needs a tilt in [0, pi/2]")


def _velocity(grid, spec, rng):
    X = grid.extent
    amp = spec.u0_amp
    if spec.u0 == "zero":
        from .state import zero_velocity
        return zero_velocity(grid)
    if spec.u0 == "cavity":
        if grid.periodic:
            raise ValueError("initial.u0: the cavity preset needs wall boundaries")
        # u = curl of sin^2(pi x) sin^2(pi y) on the unit-scaled box, on faces
        comps = []
        for a in range(grid.dims):
            c = grid.face_centers(a)
            s = [np.pi * c[b] / X[b] for b in range(grid.dims)]
            if a == 0:
                v = np.sin(s[0]) ** 2 * np.sin(2 * s[1]) * np.pi / X[1]
            elif a == 1:
                v = -np.sin(2 * s[0]) * np.sin(s[1]) ** 2 * np.pi / X[0]
            else:
                v = np.zeros_like(c[0])
            if grid.dims == 3 and a < 2:
                v = v * np.sin(s[2]) ** 2
            comps.append(amp * v)
        u, _ = project(tuple(comps), grid)
        return u
    if not grid.periodic:
        raise ValueError(f"initial.u0: preset {spec.u0!r} needs periodic boundaries")
    x = grid.cell_centers()
    k = [2 * np.pi / L for L in X]
    if spec.u0 == "taylor-green":
        u = np.zeros((grid.dims,) + grid.shape)
        u[0] = np.sin(k[0] * x[0]) * np.cos(k[1] * x[1])
        u[1] = -np.cos(k[0] * x[0]) * np.sin(k[1] * x[1])
    else:
        u = rng.standard_normal((grid.dims,) + grid.shape)
    u, _ = project(amp * u, grid)
    return u


def _director(grid, spec, rng):
    if spec.d0 == "uniform":
        d = np.zeros((3,) + grid.shape)
        d[2] = 1.0
        return d
    if spec.d0 == "random":
        d = rng.standard_normal((3,) + grid.shape)
        if spec.hemisphere:
            d[2] = np.abs(d[2])
        return d / np.sqrt(np.sum(d * d, axis=0))
    x = grid.cell_centers()
    s = [2 * np.pi * x[a] / grid.extent[a] for a in range(grid.dims)]
    polar = spec.d0_tilt * (1.0 + np.sin(s[0]) * np.sin(s[1])) / 2.0
    azim = np.cos(s[0]) + np.sin(s[1])
    if grid.dims == 3:
        azim = azim + np.sin(s[2])
    return np.stack([np.sin(polar) * np.cos(azim), np.sin(polar) * np.sin(azim), np.cos(polar)])


def _temperature(grid, spec, rng):
    lo, amp = spec.theta0_min, spec.theta0_amp
    if spec.theta0 == "constant":
        return np.full(grid.shape, lo)
    if spec.theta0 == "random":
        return lo + amp * rng.random(grid.shape)
    x = grid.cell_centers()
    r2 = sum(((x[a] - grid.extent[a] / 2) / grid.extent[a]) ** 2 for a in range(grid.dims))
    bump = np.exp(-8.0 * r2)
    bump = (bump - bump.min()) / max(float(bump.max() - bump.min()), 1e-300)
    return lo + amp * bump


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    name: str
    extent: tuple
    resolution: tuple
    bc_mode: str = "periodic"
    initial: InitialSpec = InitialSpec()
    coeffs: CoefficientSet = None
    eps: object = 0.25
    dt: float = 1e-3
    T_end: float = 1.0
    snapshot_stride: int = 0
    csv_stride: int = 1
    elastic_form: str = "chemical"
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "eps", normalize_eps(self.eps))
        if self.coeffs is None:
            object.__setattr__(self, "coeffs", default_coefficients())
        if self.snapshot_stride < 0 or self.csv_stride < 1:
            raise ValueError("output strides must be >= 1 (snapshot_stride 0 disables snapshots)")
        if not self.T_end > 0:
            raise ValueError("time.T_end must be positive")

    @property
    def n_steps(self):
        return int(round(self.T_end / self.dt))

    def grid(self):
        return build_grid(self.extent, self.resolution, self.bc_mode)

    def params(self, **kw):
        return StepParams(dt=self.dt, elastic_form=self.elastic_form, **kw)

    def initial_state(self, eps=None):
        grid = self.grid()
        spec = self.initial
        rng = np.random.default_rng(spec.seed)
        u = _velocity(grid, spec, rng)
        d = _director(grid, spec, rng)
        theta = _temperature(grid, spec, rng)
        eps = self.eps if eps is None else normalize_eps(eps)
        check_initial(grid, u, d, theta, spec.hemisphere)
        return State(grid, u, np.zeros(grid.shape), d, theta, 0.0, eps)

    def with_(self, **kw):
        return replace(self, **kw)


def check_initial(grid, u, d, theta, hemisphere):
    from .state import velocity_divergence

    div = float(np.max(np.abs(velocity_divergence(grid, u))))
    if div > 1e-10:
        raise ValueError(f"initial velocity divergence {div:.3g} exceeds 1e-10")
    if hemisphere and float(np.min(d[2])) < 0.0:
        raise ValueError("initial director leaves the upper hemisphere")
    if not float(np.min(theta)) > 0.0:
        raise ValueError("initial temperature must satisfy ess inf theta0 > 0")


def default_coefficients():
    return validate_coefficients(
        CoefficientSpec.make("rational", c0=0.05, c1=0.1),
        CoefficientSpec.make("affine_clamped", a=0.5, b=0.1, lo=0.5, hi=1.0),
        CoefficientSpec.make("constant", c=0.3),
    )


def constant_coefficients(mu=0.1, k=1.0, h=0.3):
    return validate_coefficients(
        CoefficientSpec.make("constant", c=mu),
        CoefficientSpec.make("constant", c=k),
        CoefficientSpec.make("constant", c=h),
    )


TWO_PI = 2 * math.pi
_SHEAR = InitialSpec(u0="taylor-green", d0="tilted-hemisphere", d0_tilt=1.2, theta0="bump",
                     theta0_min=0.5, theta0_amp=1.0)

SCENARIOS = {
    "equilibrium": Scenario(
        "equilibrium", (TWO_PI, TWO_PI), (16, 16), initial=InitialSpec(), T_end=0.05,
        coeffs=constant_coefficients(), description="fluid at rest, uniform director and temperature"),
    "heated-shear-2d": Scenario(
        "heated-shear-2d", (TWO_PI, TWO_PI), (64, 64), initial=_SHEAR, T_end=1.0,
        description="Taylor-Green flow, tilted hemisphere director, warm spot"),
    "limit-shear-2d": Scenario(
        "limit-shear-2d", (TWO_PI, TWO_PI), (32, 32), initial=_SHEAR, eps=LIMIT, T_end=0.25,
        description="unit-length director (limit system) on the heated shear data"),
    "heated-shear-walls": Scenario(
        "heated-shear-walls", (1.0, 1.0), (32, 32), "walls",
        initial=replace(_SHEAR, u0="cavity", u0_amp=0.5), T_end=0.25,
        description="closed box with a stirring vortex"),
    "heated-shear-3d": Scenario(
        "heated-shear-3d", (TWO_PI,) * 3, (12, 12, 12), initial=_SHEAR, T_end=0.05,
        description="three-dimensional shear with tilted director"),
    "oracle-2d": Scenario(
        "oracle-2d", (1.0, 1.0), (8, 8),
        initial=InitialSpec(u0="random", u0_amp=0.3, d0="random", theta0="random", seed=7),
        T_end=1e-3, description="random admissible state for the dense oracle"),
    "oracle-3d": Scenario(
        "oracle-3d", (1.0, 1.0, 1.0), (8, 8, 8),
        initial=InitialSpec(u0="random", u0_amp=0.3, d0="random", theta0="random", seed=11),
        T_end=1e-3, description="random admissible 3D state for the dense oracle"),
}


def get_scenario(name):
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}") from None


# ---------------------------------------------------------------------------
# audited run


class ScenarioFailure(RuntimeError):
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class RunResult:
    scenario: Scenario
    records: list
    final: State
    entropy: dict = field(default_factory=dict)
    max_principle: object = None
    energy: object = None
    violations: list = field(default_factory=list)
    states: list = None
    samples: list = None
    clipped_steps: int = 0

    @property
    def ok(self):
        return not self.violations


def _violations(records, mp, energy, entropy):
    out = [f"{name} at step {n}: {value!r}" for n, name, value in mp.violations]
    for n, r in enumerate(records):
        if r.min_production < 0.0:
            out.append(f"entropy production negative at step {n}: {r.min_production!r}")
        if r.div_u_max > 1e-10:
            out.append(f"velocity divergence {r.div_u_max:.3g} at step {n}")
    if energy is not None:
        for n in energy.mech_increases:
            out.append(f"mechanical energy increased at step {n}")
    for key, res in entropy.items():
        if not res.passed:
            out.append(f"entropy inequality {key}: residual {res.value:.3g} > {res.tol:g} x {res.scale:.3g}")
    return out


def run_scenario(scenario, output_dir=None, audit_entropy=True, keep_states=False, sample_stride=0,
                 n_steps=None, initial=None, test_functions=None):
    """Step a scenario to its end time with the audit monitors attached.

    Records diagnostics at every step, accumulates the entropy inequality for
    the default concave functions and nonnegative test fields, and writes CSV
    and snapshots to ``output_dir`` at the configured cadence.  ``sample_stride``
    keeps every k-th state in ``samples``.  On a step failure the last good
    state is written and :class:`ScenarioFailure` is raised.
    """
    from . import io

    state = scenario.initial_state() if initial is None else initial
    coeffs = scenario.coeffs
    params = scenario.params()
    n_steps = scenario.n_steps if n_steps is None else n_steps
    grid = state.grid
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.toml").write_text(io.emit_config(io.RunConfig(scenario, str(out))))

    ledgers = {}
    if audit_entropy:
        T = n_steps * params.dt
        fields_ = audit.default_test_fields(grid, T) if grid.periodic and grid.resolution[0] == grid.resolution[1] \
            else audit.TestFieldSet([], [], [audit._bump(grid, m, T) for m in (0, 1, 2)], T)
        for H in (test_functions or audit.default_test_functions()):
            for psi in fields_.psi2:
                ledgers[f"{H.label}/{psi.name}"] = audit.EntropyLedger(grid, H, psi, coeffs)

    records = [audit.record_diagnostics(state, coeffs)]
    states = [state] if keep_states else None
    samples = [state] if sample_stride else None
    clipped = 0

    def persist(s, n):
        if out is not None:
            io.write_state(out / "snapshots", s, n)

    if out is not None and scenario.snapshot_stride:
        persist(state, 0)
    for n in range(n_steps):
        try:
            new, info = advance(state, coeffs, params)
        except (SchemeError, SolverError, FloatingPointError) as exc:
            persist(state, n)
            if out is not None:
                (out / "diagnostics.csv").write_text(io.emit_diagnostics_csv(records))
            partial = RunResult(scenario, records, state, states=states, samples=samples)
            raise ScenarioFailure(f"step {n + 1} failed: {exc}", partial) from exc
        clipped += bool(info.clipped_cells)
        if ledgers:
            pieces = audit.step_pieces(state, new, coeffs)
            for led in ledgers.values():
                led.add_step(state, new, pieces)
        state = new
        records.append(audit.record_diagnostics(state, coeffs))
        if keep_states:
            states.append(state)
        if sample_stride and (n + 1) % sample_stride == 0:
            samples.append(state)
        if out is not None and scenario.snapshot_stride and (n + 1) % scenario.snapshot_stride == 0:
            persist(state, n + 1)

    entropy = {k: led.finalize() for k, led in ledgers.items()} if n_steps else {}
    mp = audit.max_principle_monitor(records)
    energy = audit.energy_law_residual(records, params.dt) if len(records) > 1 else None
    result = RunResult(scenario, records, state, entropy, mp, energy, [], states, samples, clipped)
    result.violations = _violations(records, mp, energy, entropy)
    if out is not None:
        rows = records[::scenario.csv_stride]
        if (len(records) - 1) % scenario.csv_stride:
            rows = rows + [records[-1]]
        (out / "diagnostics.csv").write_text(io.emit_diagnostics_csv(rows))
    return result


# ---------------------------------------------------------------------------
# good and bad time slices


@dataclass
class SliceSplit:
    good: list
    bad: list
    Lambda: float
    dt: float
    accumulated: Fraction
    bad_measure_times_lambda: Fraction

    @property
    def chebyshev_holds(self):
        return self.bad_measure_times_lambda <= self.accumulated


def good_bad_slice_split(series, dt, Lambda=None, factor=10.0):
    """Split step indices by the director dissipation threshold ``Lambda``.

    ``series`` holds the director dissipation of each step interval (floats or
    DiagnosticsRecords).  Bad slices have dissipation strictly above Lambda.
    The Chebyshev bound |bad| dt Lambda <= sum dissipation dt is evaluated in
    exact rational arithmetic on the recorded floats.
    """
    vals = [r.dissipation_director if isinstance(r, audit.DiagnosticsRecord) else float(r) for r in series]
    if not vals:
        raise ValueError("slice split needs a nonempty series")
    if Lambda is None:
        Lambda = factor * math.fsum(vals) / len(vals)
        if Lambda == 0 and factor > 0 and max(vals) > 0:
            Lambda = math.ulp(0.0)  # subnormal mean underflowed
    if not Lambda > 0:
        Lambda = math.inf if Lambda == 0 and max(vals) == 0 else Lambda
    if not Lambda > 0:
        raise ValueError("Lambda must be positive")
    good = [n for n, v in enumerate(vals) if v <= Lambda]
    bad = [n for n, v in enumerate(vals) if v > Lambda]
    fdt = Fraction(dt)
    acc = sum((Fraction(v) * fdt for v in vals), Fraction(0))
    lhs = Fraction(len(bad)) * fdt * (Fraction(Lambda) if math.isfinite(Lambda) else Fraction(0))
    return SliceSplit(good, bad, Lambda, dt, acc, lhs)


# ---------------------------------------------------------------------------
# eps sweep


@dataclass
class SweepMember:
    eps: object
    ok: bool = True
    error: str = ""
    max_norm_dev: float = math.nan
    penalty_avg: float = math.nan
    grad_diff_avg: float = math.nan
    grad_diff_good_avg: float = math.nan
    refine_diff_avg: float = math.nan
    mech_sup: float = math.nan
    mech_initial: float = math.nan
    bound_lhs: float = math.nan
    bound_rhs: float = math.nan
    theta_l32: float = math.nan
    grad_theta_l65: float = math.nan
    dissipation_avg: float = math.nan
    violations: list = field(default_factory=list)


@dataclass
class SweepResult:
    eps_values: list
    members: list
    limit: SweepMember = None
    dt: float = 0.0
    T_end: float = 0.0

    def metric(self, name):
        return np.array([getattr(m, name) for m in self.members])

    def decay_order(self, name="penalty_avg"):
        """Least-squares slope of log(metric) against log(eps)."""
        e = np.log(np.array(self.eps_values, dtype=float))
        v = self.metric(name)
        good = np.isfinite(v) & (v > 0)
        if good.sum() < 2:
            return math.nan
        return float(np.polyfit(e[good], np.log(v[good]), 1)[0])


def _lp_norm(values, grid, p):
    return float((np.sum(np.abs(values) ** p) * grid.cell_volume) ** (1.0 / p))


def _sweep_run(args):
    scenario, eps, stride, dt = args
    scen = scenario.with_(eps=eps, dt=dt or scenario.dt)
    try:
        res = run_scenario(scen, audit_entropy=False, sample_stride=stride)
        return eps, res, ""
    except (ScenarioFailure, ValueError) as exc:
        return eps, None, str(exc)


def _default_workers(n):
    env = os.environ.get("NEMTHSIM_THREADS")
    if env:
        return max(1, min(int(env), n))
    return 1


def epsilon_sweep(base, eps_list, sample_stride=10, include_limit=True, refine=False, workers=None,
                  Lambda_factor=10.0):
    """Run ``base`` for each eps plus the limit system on identical data.

    Metrics per member: max||d| - 1|, time-averaged int F_eps, time-averaged
    ||grad d_eps - grad d_limit||_L2 over all sampled times and over good slices
    only, the mechanical energy bound, and the temperature norms ||theta||_{3/2}
    and ||grad theta||_{6/5} at the end time.  With ``refine`` each eps is rerun
    at dt/2 and the gradient difference between the two step sizes is reported.
    """
    eps_list = [float(e) for e in eps_list]
    if any(not e > 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    d0 = base.initial_state().d
    if np.max(np.abs(np.sum(d0 * d0, axis=0) - 1.0)) > 1e-12:
        raise ValueError("the sweep needs unit-length initial director data")
    jobs = [(base, e, sample_stride, 0.0) for e in eps_list]
    if include_limit:
        jobs.append((base, LIMIT, sample_stride, 0.0))
    if refine:
        jobs += [(base, e, sample_stride, base.dt / 2) for e in eps_list]
    workers = _default_workers(len(jobs)) if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_sweep_run, jobs))
    else:
        outputs = [_sweep_run(j) for j in jobs]
    n_main = len(eps_list)
    runs = outputs[:n_main]
    limit_run = outputs[n_main] if include_limit else None
    refined = outputs[n_main + (1 if include_limit else 0):] if refine else [None] * n_main

    def summarize(eps, res, err):
        m = SweepMember(eps)
        if res is None:
            m.ok, m.error = False, err
            return m
        recs = res.records
        grid = res.final.grid
        dt = res.scenario.dt
        m.violations = list(res.violations)
        norms = [np.sqrt(np.sum(s.d * s.d, axis=0)) for s in res.samples]
        m.max_norm_dev = max(float(np.max(np.abs(recs_n - 1.0))) for recs_n in norms)
        pen = np.array([r.e_penalty for r in recs])
        m.penalty_avg = float(np.trapezoid(pen, dx=dt) / (dt * (len(recs) - 1)))
        em = np.array([r.e_mech for r in recs])
        m.mech_initial = float(em[0])
        m.mech_sup = float(np.max(em))
        diss = np.array([r.dissipation_mech for r in recs])
        twice_mech = 2 * em
        cum = 2 * dt * np.concatenate([[0.0], np.cumsum(diss[1:])])
        m.bound_lhs = float(np.max(twice_mech + cum))
        m.bound_rhs = float(2 * (recs[0].e_kin + recs[0].e_elastic))
        m.dissipation_avg = float(np.mean([r.dissipation_director for r in recs[1:]]))
        th = res.final.theta
        m.theta_l32 = _lp_norm(th, grid, 1.5)
        gth = central_gradient(th, grid, "even")
        m.grad_theta_l65 = _lp_norm(np.sqrt(np.sum(gth * gth, axis=0)), grid, 1.2)
        return m

    members = [summarize(*r) for r in runs]
    limit_member = summarize(*limit_run) if limit_run is not None else None
    if limit_run is not None and limit_run[1] is not None:
        lim = limit_run[1]
        for m, (eps, res, _) in zip(members, runs):
            if res is None:
                continue
            stride_idx = [k * sample_stride for k in range(len(res.samples))]
            diss = [res.records[n].dissipation_director for n in stride_idx]
            split = good_bad_slice_split(diss, base.dt, factor=Lambda_factor)
            diffs = []
            for s, sl in zip(res.samples, lim.samples):
                g = face_gradient(s.d - sl.d, s.grid)
                diffs.append(math.sqrt(float(np.sum(g * g)) * s.grid.cell_volume))
            diffs = np.array(diffs)
            m.grad_diff_avg = float(np.mean(diffs))
            m.grad_diff_good_avg = float(np.mean(diffs[split.good])) if split.good else math.nan
    if refine:
        for m, (eps, res, _), ref in zip(members, runs, refined):
            if res is None or ref is None or ref[1] is None:
                continue
            fine = ref[1].samples[::2]
            diffs = []
            for s, sf in zip(res.samples, fine):
                g = face_gradient(s.d - sf.d, s.grid)
                diffs.append(math.sqrt(float(np.sum(g * g)) * s.grid.cell_volume))
            m.refine_diff_avg = float(np.mean(diffs))
    order = sorted(range(len(members)), key=lambda i: -members[i].eps)
    members = [members[i] for i in order]
    return SweepResult([m.eps for m in members], members, limit_member, base.dt, base.T_end)


def decreasing_with_noise(values, noise=0.10):
    """Adjacent pairs may grow by at most ``noise``; the last value must be below the first."""
    v = np.asarray(values, dtype=float)
    if v.size < 2 or not np.all(np.isfinite(v)):
        return False
    return bool(np.all(v[1:] <= (1.0 + noise) * v[:-1]) and v[-1] < v[0])


# ---------------------------------------------------------------------------
# Galerkin refinement


@dataclass
class GalerkinRow:
    m: int
    diff_next: float = math.nan
    energy_final: float = math.nan
    within_envelope: bool = False
    error: str = ""


def galerkin_refinement(base, m_list, T=None, dt=None):
    """Reduced momentum dynamics for each m and 2m with director and temperature
    frozen at their initial values; reports ||u_m - u_2m||_L2 at the end time."""
    grid = base.grid()
    if not grid.periodic:
        raise ValueError("Galerkin refinement needs a periodic scenario")
    m_list = [int(m) for m in m_list]
    if any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ValueError("m_list must be increasing")
    s0 = base.initial_state()
    T = base.T_end if T is None else T
    dt = base.dt if dt is None else dt
    n_steps = int(round(T / dt))
    sizes = sorted(set(m_list) | {2 * m for m in m_list})
    finals = {}
    rows = {m: GalerkinRow(m) for m in m_list}
    for m in sizes:
        try:
            basis = build_basis(grid, m)
            system = assemble_ode(basis, s0.d, s0.theta, base.coeffs, convection_tensor(basis))
            traj = integrate_galerkin(system, project_velocity(basis, s0.u), dt, n_steps)
            finals[m] = reconstruct_velocity(basis, traj.coefficients[-1])
            if m in rows:
                rows[m].energy_final = float(traj.energy[-1])
                rows[m].within_envelope = traj.within_envelope
        except (GalerkinBlowUp, ValueError) as exc:
            if m in rows:
                rows[m].error = str(exc)
    for m in m_list:
        if m in finals and 2 * m in finals:
            diff = finals[m] - finals[2 * m]
            rows[m].diff_next = math.sqrt(float(np.sum(diff * diff)) * grid.cell_volume)
    return [rows[m] for m in m_list]


# ---------------------------------------------------------------------------
# dense oracle comparison


@dataclass
class OracleReport:
    discrepancies: dict

    @property
    def max_discrepancy(self):
        return max(self.discrepancies.values())


def oracle_compare(scenario_or_state, coeffs=None, params=None, threshold=1e-9):
    """Max absolute difference between the production step and the dense oracle."""
    if isinstance(scenario_or_state, Scenario):
        state = scenario_or_state.initial_state()
        coeffs = scenario_or_state.coeffs
        params = params or scenario_or_state.params()
    else:
        state = scenario_or_state
        params = params or StepParams()
    if max(state.grid.resolution) > 16:
        raise ValueError("the dense oracle is limited to 16 cells per axis")
    new, _ = advance(state, coeffs, params)
    u, P, d, theta = dense_coupled_step(state, coeffs, params)
    rep = OracleReport({
        "u": float(np.max(np.abs(new.u - u))),
        "P": float(np.max(np.abs(new.P - P))),
        "d": float(np.max(np.abs(new.d - d))),
        "theta": float(np.max(np.abs(new.theta - theta))),
    })
    if rep.max_discrepancy > threshold:
        raise AssertionError(f"production and dense oracle differ by {rep.max_discrepancy:.3e}")
    return rep


def refinement_ratio(coarse, fine):
    return abs(coarse) / abs(fine) if fine != 0 else math.inf
