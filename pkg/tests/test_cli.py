import shutil
import subprocess

import numpy as np
import pytest

from nemthsim import cli, io

from test_io import BASE


def write_config(tmp_path, text=BASE):
    path = tmp_path / "run.toml"
    path.write_text(text.replace('dir = "results"', f'dir = "{tmp_path / "results"}"'))
    return path


def test_list_scenarios(capsys):
    assert cli.main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert "heated-shear-2d" in out and "oracle-3d" in out


def test_run_and_audit(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "results"
    assert (out / "diagnostics.csv").exists()
    assert io.snapshot_steps(out / "snapshots") == list(range(6))
    assert cli.main(["audit", "--dir", str(out)]) == 0
    assert "audit passed" in capsys.readouterr().out


def test_audit_detects_tampering(tmp_path, capsys):
    cfg = write_config(tmp_path)
    cli.main(["run", "--config", str(cfg)])
    out = tmp_path / "results"
    snaps = out / "snapshots"
    theta, head = io.read_snapshot((snaps / "step_000003_theta.nts").read_bytes())
    theta[0, 0] = 1e-3
    (snaps / "step_000003_theta.nts").write_bytes(io.write_snapshot(theta, head))
    blob = (snaps / "step_000004_d.nts").read_bytes()
    (snaps / "step_000004_d.nts").write_bytes(blob[:-8])
    assert cli.main(["audit", "--dir", str(out)]) == 1
    text = capsys.readouterr().out
    assert "min_theta" in text and "snapshot_integrity: step 4" in text


def test_audit_detects_negative_director_component(tmp_path, capsys):
    cfg = write_config(tmp_path)
    cli.main(["run", "--config", str(cfg)])
    snaps = tmp_path / "results" / "snapshots"
    d, head = io.read_snapshot((snaps / "step_000002_d.nts").read_bytes())
    d[2, 1, 1] = -0.5
    (snaps / "step_000002_d.nts").write_bytes(io.write_snapshot(d, head))
    assert cli.main(["audit", "--dir", str(tmp_path / "results")]) == 1
    assert "min_d3" in capsys.readouterr().out


def test_run_scenario_with_overrides(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", "--scenario", "oracle-2d", "--out", str(out), "--T", "0.002"]) == 0
    rows = io.parse_diagnostics_csv((out / "diagnostics.csv").read_text())
    assert len(rows) == 3
    assert "entropy power(0.5)/psi2_0" in capsys.readouterr().out


def test_run_failure_exit_code(tmp_path):
    text = BASE.replace("u0_amp = 0.2", "u0_amp = 500.0").replace("dt = 0.001", "dt = 0.05") \
               .replace("T_end = 0.005", "T_end = 0.1")
    assert cli.main(["run", "--config", str(write_config(tmp_path, text))]) == 1


@pytest.mark.parametrize("argv", [
    [],
    ["run"],
    ["run", "--scenario", "nope"],
    ["sweep-eps", "--scenario", "oracle-2d", "--eps-list", "a,b"],
    ["sweep-eps", "--scenario", "oracle-2d", "--eps-list", "0.1,0.5"],
    ["galerkin", "--scenario", "oracle-2d", "--m-list", "x"],
    ["galerkin", "--scenario", "heated-shear-walls", "--m-list", "2"],
    ["audit", "--dir", "/nonexistent/dir"],
    ["oracle", "--scenario", "heated-shear-2d"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    assert cli.main(argv) == 2


def test_invalid_config_is_usage_error(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE.replace("theta0_min = 0.5", "theta0_min = 0.0"))
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "ess inf theta0 > 0" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.toml")]) == 2


def test_audit_without_snapshots(tmp_path):
    cfg = write_config(tmp_path, BASE.replace("snapshot_stride = 1", "snapshot_stride = 0"))
    cli.main(["run", "--config", str(cfg)])
    assert cli.main(["audit", "--dir", str(tmp_path / "results")]) == 2


def test_oracle_command(capsys):
    assert cli.main(["oracle", "--scenario", "oracle-2d"]) == 0
    assert "max discrepancy" in capsys.readouterr().out
    assert cli.main(["oracle", "--scenario", "oracle-2d", "--threshold", "0"]) == 1


def test_galerkin_command(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE.replace("T_end = 0.005", "T_end = 0.01"))
    assert cli.main(["galerkin", "--config", str(cfg), "--m-list", "2,4"]) == 0
    text = (tmp_path / "results" / "galerkin.csv").read_text()
    assert text.splitlines()[0] == "m,diff_next,energy_final,within_envelope,error"
    assert len(text.splitlines()) == 3


def test_sweep_command(tmp_path, capsys):
    text = BASE.replace('u0 = "random"', 'u0 = "taylor-green"').replace("[initial]", '[initial]\nd0 = "tilted-hemisphere"')
    cfg = write_config(tmp_path, text)
    assert cli.main(["sweep-eps", "--config", str(cfg), "--eps-list", "0.5,0.25", "--refine"]) == 0
    out = capsys.readouterr().out
    assert "penalty_avg:" in out
    rows = (tmp_path / "results" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 4 and rows[-1].startswith("limit")


@pytest.mark.skipif(shutil.which("nemthsim") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["nemthsim", "list-scenarios"], capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "equilibrium" in res.stdout
    res = subprocess.run(["nemthsim", "run"], capture_output=True, text=True, check=False)
    assert res.returncode == 2
