import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
