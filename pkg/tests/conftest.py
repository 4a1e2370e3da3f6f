import numpy as np
import pytest

from opcdf.envs import chain_env, chain_policies
from opcdf.oracle import enumerate_return_cdf


@pytest.fixture(scope="session")
def chain():
    """``(env, evaluation, behavior, true CDF)`` for the depth-3 chain POMDP."""
    env = chain_env(depth=3, noise=0.1)
    pi, beta = chain_policies()
    return env, pi, beta, enumerate_return_cdf(env.spec, pi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
