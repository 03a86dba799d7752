import math

import pytest

from yulepaint import dynamics

_CRITERIA = []


def record_criterion(number, description, passed, detail=""):
    """Collect one acceptance-criterion verdict for the end-of-run table."""
    _CRITERIA.append((number, description, bool(passed), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, passed, detail in sorted(_CRITERIA):
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} [{verdict}] {description}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def critical_traj_long():
    """Trajectory from the tip of the critical curve, long enough for the
    growth-constant extraction at both reference horizons."""
    return dynamics.integrate_dynamics(dynamics.PhasePoint(0.0, math.e), 2e4)


@pytest.fixture(scope="session")
def critical_traj_short():
    return dynamics.integrate_dynamics(dynamics.PhasePoint(0.0, math.e), 30.0)
