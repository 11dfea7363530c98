import random
from fractions import Fraction

import pytest

from pnfluid.casestudies import EmsAParams, EmsBParams, build_ems_a, build_ems_b


def random_rational(rng, lo, hi, den=4):
    """Uniform over the grid lo + k/den in [lo, hi]."""
    k = rng.randint(0, int((hi - lo) * den))
    return Fraction(lo) + Fraction(k, den)


def random_ems_a(rng):
    return EmsAParams(
        lam=random_rational(rng, Fraction(1, 4), 3),
        pi=Fraction(rng.randint(1, 9), 10),
        tau1=random_rational(rng, Fraction(1, 4), 4),
        tau2=random_rational(rng, Fraction(1, 4), 4),
        tau3=random_rational(rng, Fraction(1, 4), 6),
        NA=random_rational(rng, 0, 20),
        NP=random_rational(rng, 0, 20),
    )


@pytest.fixture
def rng():
    return random.Random(20260417)


@pytest.fixture
def ems_a_params():
    return EmsAParams(lam=1, pi=Fraction(1, 2), tau1=1, tau2=2, tau3=4, NA=10, NP=10)


@pytest.fixture
def ems_a(ems_a_params):
    return build_ems_a(ems_a_params)


@pytest.fixture
def ems_b_params():
    return EmsBParams(lam=1, pi=Fraction(1, 2), tau1=1, tau2=2, tau3=4, NA=10, NP=10, NR=10,
                      alpha=Fraction(1, 3))


@pytest.fixture
def ems_b(ems_b_params):
    return build_ems_b(ems_b_params)


# one summary line per acceptance criterion
_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n, text = mark.args
    ok = call.excinfo is None
    _criteria[n] = (ok and _criteria.get(n, (True,))[0], text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, text = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
