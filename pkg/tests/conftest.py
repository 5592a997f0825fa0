import numpy as np
import pytest

from hetmeasure.dataset import Dataset
from hetmeasure.scm import get_scm, sample_observational

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def appc_10k():
    return sample_observational(get_scm("appc_main"), 10_000, seed=11)


@pytest.fixture(scope="session")
def appc_1k():
    return sample_observational(get_scm("appc_main"), 1_000, seed=12)


def make_data(x, y, w=None, **kw):
    x = np.asarray(x, float)
    w = np.zeros((x.size, 0)) if w is None else np.asarray(w, float)
    return Dataset(x=x, y=np.asarray(y, float), w=w, **kw)
