import pytest

from mmlqg import nce, prob
from mmlqg.model import TimeGrid, scalar_baseline

GRID = TimeGrid(1.0, 10_000)


@pytest.fixture(scope="session")
def grid():
    return GRID


@pytest.fixture(scope="session")
def m1_nce():
    return nce.solve(scalar_baseline(), GRID)


@pytest.fixture(scope="session")
def m1_prob():
    return prob.solve(scalar_baseline(), GRID)

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
