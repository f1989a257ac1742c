import numpy as np
import pytest

from nonloc.geometry import Domain, build_grid
from nonloc.kernel import KernelSpec
from nonloc.nonlocal_op import build_plan


@pytest.fixture(scope="session")
def unit_domain():
    return Domain.interval()


@pytest.fixture(scope="session")
def plan_02(unit_domain):
    """sigma = 0.5, eps = 0.2 on (-1, 1) with h = 0.05."""
    return build_plan(KernelSpec.zero_order(0.5, 0.2), build_grid(unit_domain, 0.05))


@pytest.fixture(scope="session")
def plan_05(unit_domain):
    return build_plan(KernelSpec.zero_order(0.5, 0.5), build_grid(unit_domain, 0.125))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance_log(request):
    """Collects one summary line per acceptance criterion for the terminal report."""
    return request.config.stash[ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
