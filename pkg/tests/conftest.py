import functools

import pytest
from hypothesis import HealthCheck, settings

from cscx.ale_models import solve_simanca_ode

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def simanca(m: int, tol: float = 1e-12):
    return solve_simanca_ode(m, 1e4, tol)


@pytest.fixture(scope="session")
def simanca_profile():
    return simanca


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: (int(s.split()[1]), "INFO" in s)):
            terminalreporter.write_line(line)
