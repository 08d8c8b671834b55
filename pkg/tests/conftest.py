import numpy as np
import pytest

from seizknn.datasets import make_surrogate, write_csv
from seizknn.detector import DetectorConfig
from seizknn.evaluation import build_store


@pytest.fixture(scope="session")
def surrogate():
    return make_surrogate(n_per_class=200, seed=11)


@pytest.fixture(scope="session")
def surrogate_csv(tmp_path_factory, surrogate):
    return write_csv(surrogate, tmp_path_factory.mktemp("data") / "surrogate.csv")


@pytest.fixture(scope="session")
def default_store(surrogate):
    return build_store(surrogate, DetectorConfig(), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
