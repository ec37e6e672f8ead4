import numpy as np
import pytest

from esmrac.config import load_config
from esmrac.controller import ControllerDesign, ESLoop, PlantSpec
from esmrac.lti import ReferenceModelSpec

TRUE_PARAMS = (6.25, 3.0, 1.0)
MODEL_COEFFS = (9.0, 4.2, 1.0)
X0 = np.array([-0.1, 0.2])


def demo_design(c=(0.3, 0.2, 0.2), g=(9000.0, 3200.0, 2000.0), a_hat0=None, phi=0.0):
    loops = [ESLoop(c=ci, omega=wi, phi=phi, g=gi, d=0.1) for ci, wi, gi in zip(c, (5.0, 8.0, 14.0), g)]
    return ControllerDesign([9.0, 3.0], [1.0, 1.0], loops, a_hat0=a_hat0, gamma=[0.01] * 3)


@pytest.fixture
def plant():
    return PlantSpec(TRUE_PARAMS)


@pytest.fixture
def ref_model():
    return ReferenceModelSpec(MODEL_COEFFS)


@pytest.fixture
def design():
    return demo_design()


@pytest.fixture(scope="session")
def demo_cfg():
    return load_config("@demo")


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
