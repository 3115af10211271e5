import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA[n] = (text, "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        text, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {text}")


@pytest.fixture(scope="session")
def ankle():
    from motionimit.pla.mechanisms import pushrod_ankle
    return pushrod_ankle()
