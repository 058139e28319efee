import numpy as np
import pytest

from adiabatic_expansion import DipoleSource, TimeGrid, precession, propagate, spin_matrices
from adiabatic_expansion.expansion import expand

TWO_PI = 2 * np.pi
THETA0 = np.pi / 3

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


class Scenario:
    """Precession drive with its expansion and oracle, built once."""

    def __init__(self, j=0.5, br=5.0, theta0=THETA0, omega=1.0, phi0=0.0, T=TWO_PI,
                 points=512, order=2, tol=1e-9):
        self.rep = spin_matrices(j)
        self.field = precession(1.0, br, theta0, omega, phi0)
        self.source = DipoleSource(self.rep, self.field)
        self.grid = TimeGrid.uniform(T, points)
        self.chain = expand(self.source, self.grid, order)
        self._tol = tol
        self._oracle = None

    @property
    def oracle(self):
        if self._oracle is None:
            self._oracle = propagate(self.source, self.grid, self._tol)
        return self._oracle


@pytest.fixture(scope="session")
def rabi_half():
    """j = 1/2, b r = 5, omega_p = 1, theta0 = pi/3, T = 2 pi, 512 points."""
    return Scenario()


@pytest.fixture(scope="session")
def rabi_one():
    return Scenario(j=1.0)


@pytest.fixture(scope="session")
def rabi_shifted():
    return Scenario(phi0=0.7)
