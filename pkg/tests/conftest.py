import numpy as np
import pytest

from mhof.controller import ControllerConfig
from mhof.plant import OptimizerState, ProblemSpec
from mhof.schemes import SchemeConfig, run


def mhof_cfg(rho=0.9, eta=0.5, B=60, mu0=1.0, **ctrl):
    return SchemeConfig("mhof", mu0=mu0, controller=ControllerConfig(rho=rho, eta=eta, **ctrl), B=B)


@pytest.fixture(scope="session")
def short_run():
    spec = ProblemSpec("quadratic", d=1, p=4, seed=0)
    return run(spec, OptimizerState(), mhof_cfg(B=80), seed=0)


@pytest.fixture(scope="session")
def short_run_d2():
    spec = ProblemSpec("quadratic", d=2, p=4, seed=1)
    return run(spec, OptimizerState(), mhof_cfg(B=80), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
