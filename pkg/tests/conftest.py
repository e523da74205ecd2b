import numpy as np
import pytest

from levyembed.density import DensityPair, DensitySpec
from levyembed.levy_core import LevyTriplet


@pytest.fixture(scope="session")
def bm():
    return LevyTriplet.brownian(1.0)


@pytest.fixture(scope="session")
def stable15():
    return LevyTriplet.symmetric_stable(1.5, 1.0)


@pytest.fixture(scope="session")
def bm_pair():
    return DensityPair(DensitySpec.gaussian(0.0, 1.0), DensitySpec.gaussian(0.0, 2.0))


@pytest.fixture(scope="session")
def stable_pair():
    return DensityPair(DensitySpec.stable_marginal(1.5, 1.0, 1.0),
                       DensitySpec.stable_marginal(1.5, 1.0, 2.0))


@pytest.fixture(scope="session")
def bm_solution(bm, bm_pair):
    from levyembed.poisson import RatioFunction, solve_H
    return solve_H(RatioFunction(bm_pair, bm))


@pytest.fixture(scope="session")
def stable_solution(stable15, stable_pair):
    from levyembed.poisson import RatioFunction, solve_H
    return solve_H(RatioFunction(stable_pair, stable15))


@pytest.fixture(scope="session")
def bm_field(bm_solution, bm_pair):
    from levyembed.embed import SpeedField
    return SpeedField(bm_solution, bm_pair)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from _support import ACCEPTANCE_LINES
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
