import numpy as np
import pytest

from cardiotwin.forward import ForwardModel
from cardiotwin.geometry import PhantomSpec, build_phantom


@pytest.fixture(scope="session")
def phantom():
    return build_phantom()


@pytest.fixture(scope="session")
def small_phantom():
    return build_phantom(PhantomSpec(h=6.0))


@pytest.fixture(scope="session")
def model(phantom):
    return ForwardModel(phantom)


@pytest.fixture(scope="session")
def baseline(model):
    return model.run(None)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for k, m in list(sys.modules.items()) if k.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
