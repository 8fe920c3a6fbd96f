import numpy as np
import pytest

from beable_lab.hilbert import Decomposition, HermitianOperator, StateVector

ACCEPTANCE_LINES: list[str] = []


def rabi_state(t: float) -> StateVector:
    """Closed-form e^{-i t sigma_x} (1, 0)."""
    return StateVector([np.cos(t), -1j * np.sin(t)])


@pytest.fixture
def rabi():
    return HermitianOperator([[0, 1], [1, 0]]), Decomposition.singletons(2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
