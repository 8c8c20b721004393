import warnings

import pytest

from fisherq.errors import UnwrapWarning


@pytest.fixture(autouse=True)
def quiet_unwrap():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnwrapWarning)
        yield


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed after the run."""

    def record(number, title, passed, detail):
        ACCEPTANCE_LINES.append((number, f"{'PASS' if passed else 'FAIL'} [{number:2d}] {title}: {detail}"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
