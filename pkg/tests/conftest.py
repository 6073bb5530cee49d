import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def verdict(request, capsys):
    """Record and immediately print one PASS/FAIL line for an acceptance criterion."""
    def report(number, ok, detail=""):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        ACCEPTANCE[number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
