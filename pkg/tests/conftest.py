import numpy as np
import pytest

from pluc.core import Dataset, split_folds
from pluc.synthdata import Scenario, generate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def linear():
    return Scenario("linear")


@pytest.fixture(scope="session")
def linear_data(linear):
    data, cf = generate(linear, 600, 11)
    return data, cf, split_folds(data, 11)


def tiny_dataset(n=30, d=3, seed=0):
    r = np.random.default_rng(seed)
    return Dataset(r.uniform(size=(n, d)), r.integers(0, 2, n), r.uniform(size=n), r.integers(0, 2, n))


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
