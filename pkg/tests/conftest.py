import numpy as np
import pytest

from relugap.data import Dataset, Task, make_moons

_VERDICTS = []


def record_verdict(number, passed, detail):
    _VERDICTS.append((number, bool(passed), detail))


@pytest.fixture
def verdict():
    return record_verdict


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_VERDICTS):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def moons_small():
    return make_moons(120, 0.1, 3)


@pytest.fixture
def toy_regression():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 3))
    y = np.sin(X[:, 0]) + 0.1 * rng.standard_normal(30)
    return Dataset(X, y, Task.REGRESSION)


@pytest.fixture
def toy_binary():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((40, 3))
    y = (X[:, 0] * X[:, 1] > 0).astype(float)
    return Dataset(X, y, Task.BINARY)
