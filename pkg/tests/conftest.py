import numpy as np
import pytest

from sirdx.dataset import generate, split_train_test


@pytest.fixture(scope="session")
def default_dataset():
    """1000 rows over the default ranges, master seed 0."""
    return generate(1000, seed=0)


@pytest.fixture(scope="session")
def default_split(default_dataset):
    return split_train_test(default_dataset, 0.8, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
