import numpy as np
import pytest
from hypothesis import settings

from ifs_response import ProbabilisticIFS

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")


@pytest.fixture
def ifs_05_12():
    return ProbabilisticIFS.from_params([0.5, 1.2])


@pytest.fixture
def ifs_05_11():
    return ProbabilisticIFS.from_params([0.5, 1.1])


@pytest.fixture
def ifs_regime_a():
    return ProbabilisticIFS.from_params([0.1, 2.0])


@pytest.fixture
def ifs_regime_b():
    return ProbabilisticIFS.from_params([1 / 11, 10.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
