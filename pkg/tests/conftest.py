import numpy as np
import pytest

from sisenet.experiment import known_truth_setup
from sisenet.observation import SwabConfig


@pytest.fixture(scope="session")
def small_setup():
    """A 30-node, 2-year known-truth experiment with binary swab data."""
    return known_truth_setup(node_count=30, years=2, seed=7, interval=30, swab=SwabConfig.per_sample(0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
