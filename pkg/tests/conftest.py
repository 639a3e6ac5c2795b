import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def record_criterion(request):
    """Record a ``(number, passed, detail)`` acceptance verdict for the summary."""
    log = request.config.stash.setdefault(_CRITERIA, [])

    def record(number, passed, detail):
        log.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_CRITERIA, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(log):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
