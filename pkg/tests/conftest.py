import pytest

from decbs import high_level, low_level


@pytest.fixture(autouse=True, scope="session")
def search_invariant_checks():
    """Assert f/d monotonicity in the low level and a non-decreasing OPEN
    front in the high level for every search the tests run."""
    old = (low_level.CHECK_INVARIANTS, high_level.CHECK_INVARIANTS)
    low_level.CHECK_INVARIANTS = True
    high_level.CHECK_INVARIANTS = True
    yield
    low_level.CHECK_INVARIANTS, high_level.CHECK_INVARIANTS = old


# One line per acceptance criterion, printed after the test summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
