import pytest

from gmwb_hedging.models import BlackScholesModel, VarianceGammaModel
from gmwb_hedging.weights import weight_curves

W = 10.0
VG_PARAMS = dict(sigma=0.12, nu=0.2, theta=-0.14)

_ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    _ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(_ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def bs25_n2():
    return BlackScholesModel(0.25, 1.0, 0.0, 2)


@pytest.fixture(scope="session")
def bs30_n2():
    return BlackScholesModel(0.3, 1.0, 0.0, 2)


@pytest.fixture(scope="session")
def bs30_n5():
    return BlackScholesModel(0.3, 1.0, 0.0, 5)


@pytest.fixture(scope="session")
def vg_n5():
    return VarianceGammaModel(**VG_PARAMS, dt=1.0, n_periods=5)


@pytest.fixture(scope="session")
def curves_bs30_n5(bs30_n5):
    return weight_curves(bs30_n5, W, 5)


@pytest.fixture(scope="session")
def curves_bs25_n2(bs25_n2):
    return weight_curves(bs25_n2, W, 2)
