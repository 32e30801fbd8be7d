import numpy as np
import pytest

from pfl import GBM, Portfolio, ShortRate1F, SwapSpec, TimeGrid, business_days, par_rate

MPOR = business_days(10)


def companion_grid(report, mpor=MPOR, extra=()):
    """Reporting grid plus each date's t - mpor companion and any extra dates."""
    g = TimeGrid(np.asarray(report, dtype=float))
    return g.merged(g.points - mpor).merged(extra)


@pytest.fixture(scope="session")
def rates_model():
    return ShortRate1F(0.05, 0.008, 0.03)


@pytest.fixture(scope="session")
def atm_swap(rates_model):
    return SwapSpec(100e6, par_rate(rates_model, 10.0), "pay_fixed", 0.0, 10.0, 1)


@pytest.fixture(scope="session")
def gbm():
    return GBM(100.0, 0.01, 0.20)


@pytest.fixture
def swap_portfolio(atm_swap):
    return Portfolio((atm_swap,))


ACCEPTANCE = []  # (criterion, passed, detail), filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[1].rstrip("ab"))):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
