import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, repeated in the terminal summary.
_ACCEPTANCE_KEY = "_trafficast_acceptance"


@pytest.fixture
def criterion(request, capsys):
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        getattr(request.config, _ACCEPTANCE_KEY).setdefault(number, []).append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_configure(config):
    setattr(config, _ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, _ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        for line in results[number]:
            terminalreporter.write_line(line)
