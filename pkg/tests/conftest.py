import numpy as np
import pytest

# criterion number -> (title, outcome, details); filled by the acceptance tests
ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    details = [f"{k}={v}" for k, v in item.user_properties]
    ACCEPTANCE[number] = (title, "PASS" if report.passed else "FAIL", details)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, verdict, details = ACCEPTANCE[number]
        terminalreporter.write_line(f"{verdict} [{number}] {title}")
        for d in details:
            terminalreporter.write_line(f"       {d}")
