"""Run configuration, binary field snapshots and diagnostics CSV."""

import csv
from dataclasses import asdict, dataclass, field, fields
import io as _io
import math
from pathlib import Path
import re
import struct

import numpy as np
import tomli
import tomli_w

from .audit import CSV_FIELDS, DiagnosticsRecord
from .constitutive import CoefficientSpec, validate_coefficients
from .harness import InitialSpec, Scenario
from .state import LIMIT, State, is_limit

# ---------------------------------------------------------------------------
# configuration


DEFAULT_TOLERANCES = {"entropy": 1e-6, "max_principle": 1e-10, "divergence": 1e-10}

_SECTIONS = {
    "grid": {"extent", "resolution", "bc_mode"},
    "initial": {f.name for f in fields(InitialSpec)},
    "time": {"dt", "T_end", "eps", "elastic_form"},
    "output": {"dir", "snapshot_stride", "csv_stride"},
    "tolerances": set(DEFAULT_TOLERANCES),
}
_TOP = {"name", "description", "grid", "initial", "coefficients", "time", "output", "tolerances"}


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    output_dir: str = "out"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @property
    def seed(self):
        return self.scenario.initial.seed

    @property
    def snapshot_stride(self):
        return self.scenario.snapshot_stride

    @property
    def csv_stride(self):
        return self.scenario.csv_stride


def _check_keys(table, allowed, prefix):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown key")


def _number(value, key, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return value if integer else float(value)


def parse_config(text):
    """Strict TOML config -> RunConfig; every error names the offending key."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<document>", f"malformed TOML: {exc}") from None
    _check_keys(doc, _TOP, "")
    for sec in ("grid", "initial", "time", "output", "tolerances"):
        if sec in doc:
            if not isinstance(doc[sec], dict):
                raise ConfigError(sec, "expected a table")
            _check_keys(doc[sec], _SECTIONS[sec], f"{sec}.")
    if "grid" not in doc:
        raise ConfigError("grid", "missing section")
    g = doc["grid"]
    for key in ("extent", "resolution"):
        if key not in g:
            raise ConfigError(f"grid.{key}", "missing key")
        if not isinstance(g[key], list):
            raise ConfigError(f"grid.{key}", "expected a list")
    extent = tuple(_number(v, "grid.extent") for v in g["extent"])
    resolution = tuple(_number(v, "grid.resolution", integer=True) for v in g["resolution"])
    if len(extent) != len(resolution) or len(extent) not in (2, 3):
        raise ConfigError("grid.resolution", "extent and resolution need 2 or 3 matching entries")
    if any(n < 4 for n in resolution):
        raise ConfigError("grid.resolution", "at least 4 cells per axis")
    if any(not L > 0 for L in extent):
        raise ConfigError("grid.extent", "lengths must be positive")
    bc = g.get("bc_mode", "periodic")
    if bc not in ("periodic", "walls"):
        raise ConfigError("grid.bc_mode", f"expected 'periodic' or 'walls', got {bc!r}")

    init_tab = dict(doc.get("initial", {}))
    for key, value in init_tab.items():
        if key in ("u0", "d0", "theta0"):
            if not isinstance(value, str):
                raise ConfigError(f"initial.{key}", "expected a preset name")
        elif key == "hemisphere":
            if not isinstance(value, bool):
                raise ConfigError("initial.hemisphere", "expected true or false")
        else:
            init_tab[key] = _number(value, f"initial.{key}", integer=(key == "seed"))
    if "theta0_min" in init_tab and not init_tab["theta0_min"] > 0:
        raise ConfigError("initial.theta0_min",
                          "the initial temperature must satisfy ess inf theta0 > 0 "
                          f"(got {init_tab['theta0_min']})")
    try:
        initial = InitialSpec(**init_tab)
    except ValueError as exc:
        msg = str(exc)
        key = msg.split(":")[0] if msg.startswith("initial.") else "initial"
        raise ConfigError(key, msg.split(": ", 1)[-1]) from None
    if initial.d0 == "tilted-hemisphere" and initial.hemisphere and initial.d0_tilt > math.pi / 2:
        raise ConfigError("initial.d0_tilt", "hemisphere flag needs a tilt of at most pi/2")

    coeff_tab = doc.get("coefficients", {})
    if not isinstance(coeff_tab, dict):
        raise ConfigError("coefficients", "expected a table")
    _check_keys(coeff_tab, {"mu", "k", "h"}, "coefficients.")
    specs = {}
    for name in ("mu", "k", "h"):
        if name not in coeff_tab:
            raise ConfigError(f"coefficients.{name}", "missing table")
        tab = dict(coeff_tab[name])
        kind = tab.pop("kind", None)
        if kind is None:
            raise ConfigError(f"coefficients.{name}.kind", "missing key")
        params = {k: _number(v, f"coefficients.{name}.{k}") for k, v in tab.items()}
        try:
            specs[name] = CoefficientSpec.make(kind, **params)
        except ValueError as exc:
            raise ConfigError(f"coefficients.{name}", str(exc)) from None
    try:
        coeffs = validate_coefficients(specs["mu"], specs["k"], specs["h"])
    except ValueError as exc:
        name = str(exc).split(":")[0]
        raise ConfigError(f"coefficients.{name}", str(exc).split(": ", 1)[-1]) from None

    t = doc.get("time", {})
    dt = _number(t.get("dt", 1e-3), "time.dt")
    T_end = _number(t.get("T_end", 1.0), "time.T_end")
    if not dt > 0:
        raise ConfigError("time.dt", "must be positive")
    if not T_end > 0:
        raise ConfigError("time.T_end", "must be positive")
    eps = t.get("eps", 0.25)
    if isinstance(eps, str):
        if eps != LIMIT:
            raise ConfigError("time.eps", "expected a positive number or \"limit\"")
    else:
        eps = _number(eps, "time.eps")
        if not eps > 0:
            raise ConfigError("time.eps", "must be positive")
    form = t.get("elastic_form", "chemical")
    if form not in ("chemical", "stress"):
        raise ConfigError("time.elastic_form", "expected 'chemical' or 'stress'")

    o = doc.get("output", {})
    out_dir = o.get("dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("output.dir", "expected a path string")
    snap = _number(o.get("snapshot_stride", 0), "output.snapshot_stride", integer=True)
    csvs = _number(o.get("csv_stride", 1), "output.csv_stride", integer=True)
    if snap < 0:
        raise ConfigError("output.snapshot_stride", "must be >= 0 (0 disables snapshots)")
    if csvs < 1:
        raise ConfigError("output.csv_stride", "must be >= 1")
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in doc.get("tolerances", {}).items():
        tol[k] = _number(v, f"tolerances.{k}")
    name = doc.get("name", "custom")
    if not isinstance(name, str):
        raise ConfigError("name", "expected a string")
    desc = doc.get("description", "")
    scenario = Scenario(name, extent, resolution, bc, initial, coeffs, eps, dt, T_end, snap, csvs, form, desc)
    try:
        scenario.grid()
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    return RunConfig(scenario, out_dir, tol)


def config_dict(cfg):
    s = cfg.scenario
    doc = {"name": s.name}
    if s.description:
        doc["description"] = s.description
    doc["grid"] = {"extent": list(s.extent), "resolution": list(s.resolution), "bc_mode": s.bc_mode}
    doc["initial"] = asdict(s.initial)
    doc["coefficients"] = {n: getattr(s.coeffs, n).as_dict() for n in ("mu", "k", "h")}
    doc["time"] = {"dt": s.dt, "T_end": s.T_end, "eps": s.eps, "elastic_form": s.elastic_form}
    doc["output"] = {"dir": cfg.output_dir, "snapshot_stride": s.snapshot_stride, "csv_stride": s.csv_stride}
    doc["tolerances"] = dict(cfg.tolerances)
    return doc


def emit_config(cfg):
    return tomli_w.dumps(config_dict(cfg))


def load_config(path):
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# snapshots


MAGIC = b"NEMTHSIM"
VERSION = 1


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class SnapshotHeader:
    name: str
    resolution: tuple
    components: int = 1
    t: float = 0.0
    eps: float = 0.25
    version: int = VERSION

    @property
    def dims(self):
        return len(self.resolution)

    @property
    def payload_bytes(self):
        return int(np.prod(self.resolution)) * self.components * 8


def write_snapshot(values, header):
    """Header followed by little-endian float64 values, components interleaved last."""
    values = np.asarray(values, dtype=float)
    expect = tuple(header.resolution) if header.components == 1 else (header.components,) + tuple(header.resolution)
    if values.shape != expect:
        raise SnapshotError(f"field shape {values.shape} does not match header {expect}")
    name = header.name.encode("ascii")
    eps = math.inf if is_limit(header.eps) else float(header.eps)
    head = MAGIC + struct.pack("<II", header.version, header.dims)
    head += struct.pack(f"<{header.dims}I", *header.resolution)
    head += struct.pack("<I", len(name)) + name
    head += struct.pack("<Idd", header.components, float(header.t), eps)
    data = values if header.components == 1 else np.moveaxis(values, 0, -1)
    return head + np.ascontiguousarray(data, dtype="<f8").tobytes()


def read_snapshot(blob):
    """Inverse of :func:`write_snapshot`; returns ``(values, header)``."""
    blob = bytes(blob)
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise SnapshotError("bad magic: not a snapshot")
    version, dims = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if dims not in (1, 2, 3):
        raise SnapshotError(f"invalid dimension count {dims}")
    off = 16
    try:
        res = struct.unpack_from(f"<{dims}I", blob, off)
        off += 4 * dims
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + nlen].decode("ascii")
        if len(name) != nlen:
            raise SnapshotError("truncated header")
        off += nlen
        comps, t, eps = struct.unpack_from("<Idd", blob, off)
        off += struct.calcsize("<Idd")
    except struct.error:
        raise SnapshotError("truncated header") from None
    header = SnapshotHeader(name, tuple(res), comps, t, LIMIT if math.isinf(eps) else eps, version)
    payload = blob[off:]
    if len(payload) != header.payload_bytes:
        raise SnapshotError(f"length mismatch: payload has {len(payload)} bytes, expected {header.payload_bytes}")
    data = np.frombuffer(payload, dtype="<f8").astype(float)
    if comps == 1:
        return data.reshape(res), header
    return np.moveaxis(data.reshape(tuple(res) + (comps,)), -1, 0).copy(), header


def _velocity_fields(state):
    if state.grid.staggered:
        return [(f"u{a}", c) for a, c in enumerate(state.u)]
    return [("u", state.u)]


def write_state(directory, state, step):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, values in _velocity_fields(state) + [("P", state.P), ("d", state.d), ("theta", state.theta)]:
        values = np.asarray(values)
        if name in ("u", "d"):
            header = SnapshotHeader(name, values.shape[1:], values.shape[0], state.t, state.eps)
        else:
            header = SnapshotHeader(name, values.shape, 1, state.t, state.eps)
        (directory / f"step_{step:06d}_{name}.nts").write_bytes(write_snapshot(values, header))


def snapshot_steps(directory):
    steps = set()
    for p in Path(directory).glob("step_*_*.nts"):
        m = re.match(r"step_(\d+)_", p.name)
        if m:
            steps.add(int(m.group(1)))
    return sorted(steps)


def read_state(directory, step, grid):
    directory = Path(directory)

    def load(name):
        values, header = read_snapshot((directory / f"step_{step:06d}_{name}.nts").read_bytes())
        return values, header

    if grid.staggered:
        u = tuple(load(f"u{a}")[0] for a in range(grid.dims))
        for a, c in enumerate(u):
            if c.shape != tuple(n + (1 if b == a else 0) for b, n in enumerate(grid.resolution)):
                raise SnapshotError(f"u{a} snapshot does not match the grid")
    else:
        u = load("u")[0]
    P = load("P")[0]
    d, head = load("d")
    theta = load("theta")[0]
    if theta.shape != grid.shape or d.shape != (3,) + grid.shape:
        raise SnapshotError("snapshot does not match the grid")
    return State(grid, u, P, d, theta, head.t, head.eps)


# ---------------------------------------------------------------------------
# CSV


def _fmt(x):
    return format(float(x), ".17g")


def emit_diagnostics_csv(records):
    if not records:
        raise ValueError("no diagnostics records")
    lines = [",".join(CSV_FIELDS)]
    for r in records:
        lines.append(",".join(_fmt(v) for v in r.csv_values()))
    return "\n".join(lines) + "\n"


def parse_diagnostics_csv(text):
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_FIELDS:
        raise ValueError("unexpected diagnostics header")
    return [DiagnosticsRecord(*(float(v) for v in row)) for row in rows[1:] if row]


SWEEP_FIELDS = ("eps", "ok", "max_norm_dev", "penalty_avg", "grad_diff_avg", "grad_diff_good_avg",
                "refine_diff_avg", "mech_initial", "mech_sup", "bound_lhs", "bound_rhs", "theta_l32",
                "grad_theta_l65", "dissipation_avg", "error")


def emit_sweep_csv(result):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    members = list(result.members) + ([result.limit] if result.limit is not None else [])
    for m in members:
        row = []
        for name in SWEEP_FIELDS:
            v = getattr(m, name)
            if name == "eps":
                row.append(v if isinstance(v, str) else _fmt(v))
            elif name == "ok":
                row.append(int(v))
            elif name == "error":
                row.append(v)
            else:
                row.append(_fmt(v))
        w.writerow(row)
    return buf.getvalue()


def emit_galerkin_csv(rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("m", "diff_next", "energy_final", "within_envelope", "error"))
    for r in rows:
        w.writerow((r.m, _fmt(r.diff_next), _fmt(r.energy_final), int(r.within_envelope), r.error))
    return buf.getvalue()
