from fractions import Fraction

import numpy as np
import pytest

from liquidtop.experiments import _unit_basis, system_for
from liquidtop.model import make_params

HALF = Fraction(1, 2)

REFERENCE = dict(A=1.0, B=1.0, C=3.0, beta2=4.0, rho=1.0, nu=1.0, lam=2.0, cavity_scale=0.5)
# slower viscosity: same threshold, a spectral gap ~50x wider for time integration
DYNAMIC = dict(REFERENCE, nu=0.01)
SUBCRITICAL = dict(DYNAMIC, beta2=8.0, lam=1.0)
FLAT_TOP = dict(DYNAMIC, A=2.0, B=2.0, C=1.0)


@pytest.fixture(scope="session")
def unit_bases():
    return {d: _unit_basis(HALF, d) for d in (0, 1, 2)}


@pytest.fixture(scope="session")
def ref_params():
    return make_params(REFERENCE)


@pytest.fixture(scope="session")
def ref_system():
    return system_for(make_params(REFERENCE), 2)


@pytest.fixture(scope="session")
def dyn_system():
    return system_for(make_params(DYNAMIC), 2)


@pytest.fixture(scope="session")
def small_system():
    """Degree-1 dynamic system for quick integrations."""
    return system_for(make_params(DYNAMIC), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion(capsys):
    """``criterion(n, title, passed, detail)`` records and prints one line."""

    def record(n, title, passed, detail=""):
        line = f"criterion {n:2d} [{'PASS' if passed else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
        ACCEPTANCE_LINES[n] = line
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
