import numpy as np
import pytest

from compref.scenarios import toy1d, toy2d

CRITERIA: dict[int, str] = {}


@pytest.fixture
def record_criterion():
    """Store the one-line verdict of an acceptance criterion for the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        CRITERIA[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy1d_problem():
    return toy1d()


@pytest.fixture(scope="session")
def toy2d_problem():
    return toy2d()
