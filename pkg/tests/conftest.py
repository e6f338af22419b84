import numpy as np
import pytest

from dpp_repulse.kernels import (BESSEL, LAGUERRE_GAUSS, MOST_REPULSIVE, POISSON, KernelSpec,
                                 make_kernel)


@pytest.fixture(scope="session")
def cb2():
    return make_kernel(KernelSpec(MOST_REPULSIVE, d=2, rho=1.0))


@pytest.fixture(scope="session")
def cb1():
    return make_kernel(KernelSpec(MOST_REPULSIVE, d=1, rho=1.0))


@pytest.fixture(scope="session")
def poisson2():
    return make_kernel(KernelSpec(POISSON, d=2, rho=1.0))


def gaussian(d, rho, alpha):
    return make_kernel(KernelSpec(LAGUERRE_GAUSS, d=d, rho=rho, m=1, alpha=alpha))


def bessel(d, rho, sigma, alpha):
    return make_kernel(KernelSpec(BESSEL, d=d, rho=rho, sigma=sigma, alpha=alpha))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import ACCEPTANCE_KEY

    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
