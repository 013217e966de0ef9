import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def efficiency_reports():
    """Both schemes on the full mesh protocol, median-of-3 timings."""
    import time

    from svcj_hoc import harness

    t0 = time.perf_counter()
    reports = {rep.scheme: rep for rep in harness.run_efficiency(repeats=3)}
    reports["elapsed_s"] = time.perf_counter() - t0
    return reports


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
