import numpy as np
import pytest

from cavity_blockade.protocols import gate_dwell_times
from cavity_blockade.pulses import builtin_pulse


@pytest.fixture(scope="session")
def cz_pulse():
    return builtin_pulse("CZ")


@pytest.fixture(scope="session")
def c2z_pulse():
    return builtin_pulse("C2Z")


@pytest.fixture(scope="session")
def cz_tau(cz_pulse):
    return gate_dwell_times("CZ", cz_pulse)


@pytest.fixture(scope="session")
def c2z_tau(c2z_pulse):
    return gate_dwell_times("C2Z", c2z_pulse)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert on it."""

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
