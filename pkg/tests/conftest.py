import math

import numpy as np
import pytest

from sqglab import corpus
from sqglab.evolution import family_for
from sqglab.spectral import Grid, PhysicalField, forward

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


@pytest.fixture(scope="session")
def grid64():
    return Grid(64)


@pytest.fixture(scope="session")
def grid128():
    return Grid(128)


@pytest.fixture(scope="session")
def fam64(grid64):
    return family_for(grid64)


@pytest.fixture
def gen():
    return corpus.rng(12345)


def field_from(grid, fn):
    """Spectral field of ``fn(x, y)`` sampled on ``grid``."""
    x, y = grid.coordinates
    return forward(PhysicalField(grid, fn(x, y)))


def random_field(grid, gen, k_cut=None):
    if k_cut is None:
        k_cut = grid.n / 3
    return corpus.random_spectral(grid, gen, lambda k: np.exp(-(k / (k_cut / 2)) ** 2) * (k <= k_cut))


P_VALUES = (1.0, 2.0, math.inf)
