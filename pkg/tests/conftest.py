import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("lab", deadline=None, max_examples=60)
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, limit): acceptance criterion with a runtime limit in seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        number, limit = mark.args
        _criteria.append((number, "PASS" if rep.passed else "FAIL", rep.duration, limit, item.name))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, duration, limit, name in sorted(_criteria):
        terminalreporter.write_line(f"{verdict} criterion {number:2d}  {duration:7.1f} s (limit {limit} s)  {name}")
