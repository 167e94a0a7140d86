import numpy as np
import pytest

from hapticrrt import model_from_config, shipped


@pytest.fixture(scope="session")
def pendulum():
    return model_from_config(shipped("pendulum"))


@pytest.fixture(scope="session")
def clip():
    return model_from_config(shipped("clip"))


@pytest.fixture(scope="session")
def bookshelf():
    return model_from_config(shipped("bookshelf"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
