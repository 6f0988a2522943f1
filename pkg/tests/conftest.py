"""Shared, expensive fixtures: the balanced state for a unit disk pump and what hangs off it."""

import pytest

from gppd.contraction import make_context, solve_error_terms
from gppd.discretization import HermiteBasis, build_grid
from gppd.expansion import build_expansion
from gppd.linearized import build_pair
from gppd.pumpbalance import PumpProfile, find_balanced_mass

DISK = "kind=disk,s0=1,R=1"


@pytest.fixture(scope="session")
def grid():
    return build_grid(128, 8.0)


@pytest.fixture(scope="session")
def basis(grid):
    return HermiteBasis(grid, 40)


@pytest.fixture(scope="session")
def disk():
    return PumpProfile.parse(DISK)


@pytest.fixture(scope="session")
def balance(grid, disk):
    return find_balanced_mass(disk, 1.0, (0.01, 100.0), 1e-8, grid)


@pytest.fixture(scope="session")
def pair(balance):
    return build_pair(balance.Q0, balance.mu0)


@pytest.fixture(scope="session")
def expansion(pair, balance):
    return build_expansion(pair, balance.sigma, balance.alpha)


@pytest.fixture(scope="session")
def context(expansion):
    return make_context(expansion)


@pytest.fixture(scope="session")
def wave(context):
    return solve_error_terms(context, 0.05)


_ACCEPTANCE: dict = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
