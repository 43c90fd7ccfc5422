"""Command line entry point: ``nemthsim <subcommand> ...``.

Exit codes: 0 success, 1 invariant violation or failed run, 2 usage error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import audit, harness, io


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _load(args):
    """Scenario and output directory from --config or --scenario."""
    if getattr(args, "config", None):
        try:
            cfg = io.load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except io.ConfigError as exc:
            raise UsageError(f"invalid config: {exc}") from None
        scen, out = cfg.scenario, cfg.output_dir
    elif getattr(args, "scenario", None):
        try:
            scen = harness.get_scenario(args.scenario)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        out = "out"
    else:
        raise UsageError("give --config FILE or --scenario NAME")
    if getattr(args, "out", None):
        out = args.out
    if getattr(args, "T", None):
        scen = scen.with_(T_end=args.T)
    return scen, out


def cmd_run(args):
    scen, out = _load(args)
    try:
        res = harness.run_scenario(scen, output_dir=out)
    except harness.ScenarioFailure as exc:
        print(f"run failed: {exc}")
        return 1
    last = res.records[-1]
    print(f"{scen.name}: {len(res.records) - 1} steps, t = {last.t:.6g}, e_total = {last.e_total:.12g}, "
          f"min theta = {last.min_theta:.6g}, max |d| = {last.max_norm_d:.12g}")
    for key, r in res.entropy.items():
        print(f"entropy {key}: residual {r.value:.3e} (scale {r.scale:.3e})")
    if res.violations:
        for v in res.violations:
            print(f"VIOLATION {v}")
        return 1
    print(f"outputs written to {out}")
    return 0


def cmd_sweep(args):
    scen, out = _load(args)
    try:
        result = harness.epsilon_sweep(scen, args.eps_list, include_limit=not args.no_limit,
                                       refine=args.refine, workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Path(out).mkdir(parents=True, exist_ok=True)
    path = Path(out) / "sweep.csv"
    path.write_text(io.emit_sweep_csv(result))
    print(io.emit_sweep_csv(result), end="")
    status = 0
    for m in result.members + ([result.limit] if result.limit else []):
        if not m.ok:
            print(f"FAILED eps={m.eps}: {m.error}")
            status = 1
        for v in m.violations:
            print(f"VIOLATION eps={m.eps}: {v}")
            status = 1
    for name in ("max_norm_dev", "penalty_avg"):
        trend = "decreasing" if harness.decreasing_with_noise(result.metric(name)) else "NOT decreasing"
        print(f"{name}: {trend}; fitted order {result.decay_order(name):.3f}")
    print(f"sweep table written to {path}")
    return status


def cmd_galerkin(args):
    scen, out = _load(args)
    try:
        rows = harness.galerkin_refinement(scen, args.m_list, T=args.T)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Path(out).mkdir(parents=True, exist_ok=True)
    path = Path(out) / "galerkin.csv"
    text = io.emit_galerkin_csv(rows)
    path.write_text(text)
    print(text, end="")
    bad = [r for r in rows if r.error or not r.within_envelope]
    for r in bad:
        print(f"VIOLATION m={r.m}: {r.error or 'energy envelope exceeded'}")
    return 1 if bad else 0


def audit_directory(directory):
    """Re-run the audit suite over stored snapshots; returns a list of failures."""
    directory = Path(directory)
    try:
        cfg = io.load_config(directory / "config.toml")
    except (OSError, io.ConfigError) as exc:
        raise UsageError(f"cannot load run configuration: {exc}") from None
    scen = cfg.scenario
    grid = scen.grid()
    snapdir = directory / "snapshots"
    steps = io.snapshot_steps(snapdir)
    if not steps:
        raise UsageError(f"no snapshots under {snapdir}")
    failures = []
    states = []
    for n in steps:
        try:
            states.append(io.read_state(snapdir, n, grid))
        except (OSError, ValueError) as exc:
            failures.append(f"snapshot_integrity: step {n}: {exc}")
    if not states:
        return failures
    tol = cfg.tolerances
    recs = [audit.record_diagnostics(s, scen.coeffs) for s in states]
    for n, s in zip(steps, states):
        if not all(np.all(np.isfinite(f)) for f in (s.P, s.d, s.theta)):
            failures.append(f"finite_fields: step {n}")
    mp = audit.max_principle_monitor(recs, tol=tol["max_principle"])
    for k, name, value in mp.violations:
        failures.append(f"{name}: step {steps[k]} value {value!r}")
    for n, r in zip(steps, recs):
        if r.min_production < 0:
            failures.append(f"entropy_production: step {n} min {r.min_production!r}")
        if r.div_u_max > tol["divergence"]:
            failures.append(f"divergence: step {n} max {r.div_u_max:.3e}")
    for (n0, r0), (n1, r1) in zip(zip(steps, recs), zip(steps[1:], recs[1:])):
        if r1.e_mech > r0.e_mech * (1 + 1e-12) + 1e-300:
            failures.append(f"mechanical_energy: increased between steps {n0} and {n1}")
    consecutive = len(states) > 1 and all(b - a == 1 for a, b in zip(steps, steps[1:]))
    if consecutive:
        T = states[-1].t
        fields_ = audit.TestFieldSet([], [], [audit._bump(grid, m, T) for m in (0, 1, 2)], T)
        for H in audit.default_test_functions():
            for psi in fields_.psi2:
                r = audit.entropy_inequality_residual(states, H, psi, scen.coeffs, tol["entropy"])
                if not r.passed:
                    failures.append(f"entropy_inequality: {H.label}/{psi.name} residual {r.value:.3e}")
    return failures


def cmd_audit(args):
    failures = audit_directory(args.dir)
    if failures:
        for f in failures:
            print(f"FAILED {f}")
        return 1
    print(f"audit passed: {args.dir}")
    return 0


def cmd_oracle(args):
    names = [args.scenario] if args.scenario else ["oracle-2d", "oracle-3d"]
    status = 0
    for name in names:
        try:
            scen = harness.get_scenario(name)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        try:
            rep = harness.oracle_compare(scen, threshold=args.threshold)
            print(f"{name}: max discrepancy {rep.max_discrepancy:.3e} "
                  + " ".join(f"{k}={v:.2e}" for k, v in rep.discrepancies.items()))
        except AssertionError as exc:
            print(f"VIOLATION {name}: {exc}")
            status = 1
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return status


def cmd_list(args):
    for name, s in harness.SCENARIOS.items():
        res = "x".join(str(n) for n in s.resolution)
        print(f"{name:20s} {s.bc_mode:8s} {res:10s} eps={s.eps} dt={s.dt:g} T={s.T_end:g}  {s.description}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="nemthsim", description="Non-isothermal nematic flow simulator")
    sub = p.add_subparsers(dest="command", metavar="{run,sweep-eps,galerkin,audit,oracle,list-scenarios}")

    def source(sp):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--scenario", help="name of a shipped scenario")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--T", type=float, help="override the end time")

    r = sub.add_parser("run", help="run a scenario with audits")
    source(r)
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep-eps", help="penalty continuation experiment")
    source(s)
    s.add_argument("--eps-list", type=_floats, required=True)
    s.add_argument("--no-limit", action="store_true", help="skip the unit-length comparison run")
    s.add_argument("--refine", action="store_true", help="add the dt/2 refinement column")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_sweep)
    g = sub.add_parser("galerkin", help="Galerkin mode refinement table")
    source(g)
    g.add_argument("--m-list", type=_ints, required=True)
    g.set_defaults(func=cmd_galerkin)
    a = sub.add_parser("audit", help="audit a run directory with stored snapshots")
    a.add_argument("--dir", required=True)
    a.set_defaults(func=cmd_audit)
    o = sub.add_parser("oracle", help="compare one step with the dense reference")
    o.add_argument("--scenario")
    o.add_argument("--threshold", type=float, default=1e-9)
    o.set_defaults(func=cmd_oracle)
    ls = sub.add_parser("list-scenarios", help="list shipped scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"nemthsim: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
