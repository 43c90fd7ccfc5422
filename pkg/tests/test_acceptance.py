"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import math

import numpy as np
from conftest import CRITERIA_LINES, ELAPSED, RICHARDSON_DT
from nemthsim import audit, galerkin, harness, solvers
from nemthsim.grid import build_grid, integrate


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    CRITERIA_LINES.append(line)
    assert ok, line


def test_c01_maximum_principles(shear_run):
    scen = shear_run.scenario
    assert scen.resolution == (64, 64) and scen.n_steps == 1000 and scen.dt == 1e-3 and scen.eps == 0.25
    recs = shear_run.records
    est = ELAPSED["heated-shear-2d"]
    nd = max(r.max_norm_d for r in recs)
    d3 = min(r.min_d3 for r in recs)
    th = min(r.min_theta for r in recs)
    ok = (len(recs) == 1001 and nd <= 1 + 1e-10 and d3 >= -1e-10 and th >= 0.5 - 1e-10
          and recs[0].min_theta >= 0.5 - 1e-10 and est < 120)
    report(1, ok, f"max|d|={nd:.15f} min d3={d3:.3e} min theta={th:.12f} runtime {est:.1f}s")


def test_c02_entropy_production_nonnegative(scenario_runs):
    worst = {name: min(r.min_production for r in res.records) for name, res in scenario_runs.items()}
    ok = all(v >= 0.0 for v in worst.values())
    report(2, ok, "min production " + ", ".join(f"{k}={v:.2e}" for k, v in worst.items()))


def _ratios(values):
    return [values[i] / values[i + 1] for i in range(len(values) - 1)]


def test_c03_total_energy_first_order(richardson_runs):
    drift = [abs(r.energy.drift_total) for r in richardson_runs]
    ratios = _ratios(drift)
    C = max(d / dt for d, dt in zip(drift, RICHARDSON_DT))
    ok = all(1.7 <= q <= 2.3 for q in ratios)
    report(3, ok, f"drift {['%.3e' % d for d in drift]} ratios {['%.3f' % q for q in ratios]} C={C:.3g}")


def test_c04_mechanical_energy_dissipation(shear_run, richardson_runs):
    increases = list(shear_run.energy.mech_increases)
    for r in richardson_runs:
        increases += r.energy.mech_increases
    integ = [abs(r.energy.integrated_mech) for r in richardson_runs]
    ratios = _ratios(integ)
    ok = not increases and all(1.7 <= q <= 2.3 for q in ratios)
    report(4, ok, f"increases {len(increases)}; integrated residual {['%.3e' % v for v in integ]} "
                  f"ratios {['%.3f' % q for q in ratios]}")


def test_c05_heat_balance():
    worst = 0.0
    for name, steps in (("heated-shear-2d", 100), ("limit-shear-2d", 20), ("heated-shear-3d", 10),
                        ("equilibrium", 10), ("oracle-2d", 5), ("oracle-3d", 3)):
        scen = harness.get_scenario(name)
        s, p = scen.initial_state(), scen.params()
        for _ in range(steps):
            new, info = solvers.advance(s, scen.coeffs, p)
            lhs = integrate(new.theta, s.grid) - integrate(s.theta, s.grid)
            rhs = p.dt * info.heat_source_total
            # relative to the sources, with a floor at the round-off of int theta
            scale = max(abs(rhs), np.finfo(float).eps * integrate(np.abs(s.theta), s.grid))
            worst = max(worst, abs(lhs - rhs) / scale)
            s = new
    report(5, worst <= 1e-12, f"worst relative imbalance {worst:.3e}")


def test_c06_entropy_inequality(scenario_runs):
    worst = 0.0
    count = 0
    failed = []
    for name, res in scenario_runs.items():
        assert res.entropy, name
        for key, r in res.entropy.items():
            count += 1
            worst = max(worst, r.value / r.scale)
            if not r.value <= 1e-6 * r.scale:
                failed.append(f"{name}:{key}")
    report(6, not failed and count >= 6 * len(scenario_runs),
           f"{count} inequalities, worst residual/scale {worst:.3e}, failed {failed}")


def test_c07_epsilon_sweep(sweep):
    pen = sweep.metric("penalty_avg")
    dev = sweep.metric("max_norm_dev")
    members = sweep.members + [sweep.limit]
    rhs = {m.mech_initial for m in members}
    bound = all(m.mech_sup <= m.mech_initial * (1 + 1e-12) for m in members)
    ok = (all(m.ok and not m.violations for m in members) and harness.decreasing_with_noise(pen)
          and harness.decreasing_with_noise(dev) and len(rhs) == 1 and bound and ELAPSED["sweep"] < 900)
    report(7, ok, f"penalty_avg {['%.3e' % v for v in pen]} max||d|-1| {['%.3e' % v for v in dev]} "
                  f"sup E_mech <= {rhs.pop():.6f} for all members; {ELAPSED['sweep']:.0f}s")


def test_c08_chebyshev_slices(shear_run):
    series = [r.dissipation_director for r in shear_run.records[1:]]
    mean = math.fsum(series) / len(series)
    dt = shear_run.scenario.dt
    out = []
    ok = True
    for factor in (1, 10, 100):
        split = harness.good_bad_slice_split(series, dt, Lambda=factor * mean)
        ok &= split.chebyshev_holds
        out.append(f"{factor}x: |B|={len(split.bad)}")
    report(8, ok, "; ".join(out))


def test_c09_galerkin_fidelity():
    rng = np.random.default_rng(3)
    grid = build_grid((2 * np.pi, 2 * np.pi), (8, 8))
    basis = galerkin.build_basis(grid, 16)
    A = galerkin.convection_tensor(basis)
    skew = 0.0
    for _ in range(5):
        a, b = rng.standard_normal((2, basis.size))
        skew = max(skew, abs(np.einsum("ijk,i,j,k->", A, b, a, b)))
    co = harness.constant_coefficients(mu=0.3)
    B = galerkin.viscous_matrix(basis, np.full(grid.shape, 1.2), co.mu)
    bdev = float(np.max(np.abs(B + 0.3 * np.diag(basis.eigenvalues))))
    rows = harness.galerkin_refinement(harness.get_scenario("heated-shear-2d"), [4, 8, 16])
    diffs = [r.diff_next for r in rows]
    decreasing = all(b < a for a, b in zip(diffs, diffs[1:])) and all(r.within_envelope for r in rows)

    scen = harness.get_scenario("heated-shear-2d").with_(resolution=(8, 8), elastic_form="stress")
    s = scen.initial_state()
    p = scen.params()
    u1, _ = solvers.momentum_step(s, scen.coeffs, p)
    full = galerkin.build_basis(s.grid, None, include_mean=True)
    system = galerkin.assemble_ode(full, s.d, s.theta, scen.coeffs)
    g1 = galerkin.imex_step(system, galerkin.project_velocity(full, s.u), p.dt)
    step = float(np.max(np.abs(galerkin.reconstruct_velocity(full, g1) - u1)))
    ok = skew < 1e-12 and bdev < 1e-12 and decreasing and step < 1e-8
    report(9, ok, f"(a) skew {skew:.2e} (b) B dev {bdev:.2e} (c) diffs {['%.3e' % d for d in diffs]} "
                  f"(d) step {step:.2e}")


def test_c10_oracle_equivalence():
    reps = [harness.oracle_compare(harness.get_scenario(n), threshold=1e-9) for n in ("oracle-2d", "oracle-3d")]
    worst = max(r.max_discrepancy for r in reps)
    report(10, worst < 1e-9, f"max discrepancy 2D {reps[0].max_discrepancy:.2e} 3D {reps[1].max_discrepancy:.2e}")


def test_c11_manufactured_orders(manufactured):
    co = harness.default_coefficients()
    fl, wu, wd = [], [], []
    for n in (32, 64):
        g = build_grid((2 * np.pi, 2 * np.pi), (n, n))
        dt = 1e-4
        r = audit.first_law_pointwise_residual(manufactured.state(g, 0.3), manufactured.state(g, 0.3 + dt),
                                               co, forcing_work=manufactured.work)
        r = r[audit.interior_mask(g)]
        fl.append(math.sqrt(float(np.sum(r * r)) * g.cell_volume))
        T, N = 0.5, 500
        traj = [manufactured.state(g, T * i / N) for i in range(N + 1)]
        w = audit.weak_residuals(traj, audit.default_test_fields(g, T), co, manufactured.forcing())
        wu.append(math.sqrt(sum(v * v for v in w.momentum.values())))
        wd.append(math.sqrt(sum(v * v for v in w.director.values())))
    ratios = [fl[0] / fl[1], wu[0] / wu[1], wd[0] / wd[1]]
    ok = all(3.4 <= q <= 4.6 for q in ratios)
    report(11, ok, f"first law {ratios[0]:.3f}, weak momentum {ratios[1]:.3f}, weak director {ratios[2]:.3f}")


def test_c12_temperature_bounds(sweep):
    ref = sweep.members[0]
    q32 = [m.theta_l32 / ref.theta_l32 for m in sweep.members]
    q65 = [m.grad_theta_l65 / ref.grad_theta_l65 for m in sweep.members]
    ok = all(0.5 <= q <= 2.0 for q in q32 + q65)
    report(12, ok, f"||theta||_3/2 ratios {['%.3f' % q for q in q32]} ||grad theta||_6/5 ratios "
                   f"{['%.3f' % q for q in q65]}")

