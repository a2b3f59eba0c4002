import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plmpart.data import Dataset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_dataset(y, x, z=None, zd=None, x_names=None):
    x = np.atleast_2d(np.asarray(x, float))
    if x.shape[0] != len(y):
        x = x.T
    names = x_names or tuple(f"x{j}" for j in range(x.shape[1]))
    zc = np.zeros((len(y), 0)) if z is None else np.asarray(z, float).reshape(len(y), -1)
    zc_names = tuple(f"z{j}" if zc.shape[1] > 1 else "z" for j in range(zc.shape[1]))
    if zd is not None:
        zd = np.asarray(zd).reshape(len(y), -1)
        zd_names = ("g",) if zd.shape[1] == 1 else tuple(f"g{j}" for j in range(zd.shape[1]))
        levels = tuple(tuple(str(v) for v in np.unique(zd[:, j])) for j in range(zd.shape[1]))
        return Dataset(np.asarray(y, float), x, names, zc, zc_names, zd, zd_names, levels)
    return Dataset(np.asarray(y, float), x, names, zc, zc_names)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria record one line each; printed at the end of the session
ACCEPTANCE = []


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
