import numpy as np
import pytest

from mdpaccel.instances import GarnetSpec, cycle_mdp, garnet, hard_chain, reversible_walk


@pytest.fixture
def chain3():
    return hard_chain(3, 0.5)


@pytest.fixture
def cycle4():
    return cycle_mdp(4, 0.5)


@pytest.fixture
def small_garnet():
    return garnet(GarnetSpec(20, 5, seed=3), 0.9)


@pytest.fixture
def walk():
    return reversible_walk(30, 0.3, seed=2, discount=0.9)


def two_action_mdp(discount=0.8):
    """2 states, 2 actions, small enough to check by hand."""
    P = np.array([[[0.5, 0.5], [1.0, 0.0]],
                  [[0.0, 1.0], [0.3, 0.7]]])
    r = np.array([[1.0, 0.0], [2.0, 3.0]])
    from mdpaccel.mdp import Mdp
    return Mdp.from_dense(P, r, discount)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
