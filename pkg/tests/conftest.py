import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nemthsim import harness  # noqa: E402

ELAPSED = {}
RICHARDSON_T = 0.25
RICHARDSON_DT = (2e-3, 1e-3, 5e-4)
SWEEP_EPS = [0.5, 0.25, 0.125, 0.0625]


@pytest.fixture(scope="session")
def scenario_runs():
    """Every shipped scenario run once with full audits."""
    out = {}
    for name, s in harness.SCENARIOS.items():
        t0 = time.perf_counter()
        out[name] = harness.run_scenario(s)
        ELAPSED[name] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def shear_run(scenario_runs):
    return scenario_runs["heated-shear-2d"]


@pytest.fixture(scope="session")
def richardson_runs():
    base = harness.get_scenario("heated-shear-2d").with_(T_end=RICHARDSON_T)
    return [harness.run_scenario(base.with_(dt=dt), audit_entropy=False) for dt in RICHARDSON_DT]


@pytest.fixture(scope="session")
def sweep():
    t0 = time.perf_counter()
    result = harness.epsilon_sweep(harness.get_scenario("heated-shear-2d"), SWEEP_EPS)
    ELAPSED["sweep"] = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def manufactured():
    from manufactured import Manufactured

    return Manufactured(harness.default_coefficients())


CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
