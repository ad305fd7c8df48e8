import warnings
from functools import lru_cache

import pytest

from ch2wave.params import Params
from ch2wave.profile import build_profile


@lru_cache(maxsize=None)
def cached_profile(sigma, A, c, branch=None, half_length=None, n_points=4096):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return build_profile(Params(sigma, A, c), branch, half_length, n_points)


@pytest.fixture(scope="session")
def profile_factory():
    return cached_profile


@pytest.fixture
def threads1(monkeypatch):
    monkeypatch.setenv("CH2WAVE_THREADS", "1")


CRITERIA = {}


def record_criterion(key, ok, detail):
    line = f"CRITERION {key}: {'PASS' if ok else 'FAIL'} - {detail}"
    CRITERIA[key] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")

    def order(key):
        key = str(key)
        return int(key.rstrip("abcdefgh")), key

    for key in sorted(CRITERIA, key=order):
        terminalreporter.write_line(CRITERIA[key])
