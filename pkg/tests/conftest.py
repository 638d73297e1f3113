import numpy as np
import pytest

from xva_engine.g2pp import PUBLISHED_PARAMS, G2ppModel
from xva_engine.marketdata import curve_jacobian, load_market
from xva_engine.pricing import instrument_menu
from xva_engine.simm import ForwardSimm, SimmParams

# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def market():
    return load_market()


@pytest.fixture(scope="session")
def model(market):
    return G2ppModel(PUBLISHED_PARAMS, market.discount, market.forward)


@pytest.fixture(scope="session")
def menu():
    return instrument_menu()


@pytest.fixture(scope="session")
def simm_params():
    return SimmParams.from_csv()


@pytest.fixture(scope="session")
def fsimm(model, market, simm_params):
    return ForwardSimm(model, simm_params, curve_jacobian(market.discount, market.forward))


@pytest.fixture
def rng():
    return np.random.default_rng(20181228)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
