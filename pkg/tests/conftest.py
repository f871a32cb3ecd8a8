import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the terminal summary prints them all."""

    def record(name, passed, detail):
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
