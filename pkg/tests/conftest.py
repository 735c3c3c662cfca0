import numpy as np
import pytest

from pmu_fdia import grid_model

TWO_BUS = """\
# minimal case
[buses]
id,kind,Ps
1,G*,0.5
2,L,-0.5
[branches]
from,to,x
1,2,0.1
"""

# generator 1 (reference) feeding a load chain 2-3-4, with a tie 1-4
CHAIN = """\
[buses]
1,G*,0.9
2,L,-0.2
3,L,-0.3
4,L,-0.4
[branches]
1,2,0.1
2,3,0.2
3,4,0.25
4,1,0.5
"""


@pytest.fixture
def two_bus():
    return grid_model.load_case(TWO_BUS)


@pytest.fixture
def chain():
    return grid_model.load_case(CHAIN)


@pytest.fixture(scope="session")
def ieee39():
    return grid_model.ieee39()


@pytest.fixture(scope="session")
def ieee39_meas(ieee39):
    return grid_model.build_measurement_jacobian(ieee39)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
