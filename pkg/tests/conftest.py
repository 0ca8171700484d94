import numpy as np
import pytest

from mzlab import ode


@pytest.fixture(scope="session")
def hald():
    return ode.hald_system()


@pytest.fixture
def oscillator():
    return ode.hamiltonian_system(lambda x: 0.5 * (x[0] ** 2 + x[1] ** 2),
                                  lambda x: np.stack([x[0], x[1]]), 2)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
