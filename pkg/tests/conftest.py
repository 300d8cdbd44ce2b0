import numpy as np
import pytest

from driftlab.brn import birth_death


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def bd_net():
    return birth_death(1.0, 1.0)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, title): acceptance criterion k")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    k, title = mark.args
    if report.when == "setup" and report.passed:
        return
    detail = "; ".join(str(v) for name, v in item.user_properties if name == "detail")
    if report.failed:
        msg = str(report.longrepr.reprcrash.message) if hasattr(report.longrepr, "reprcrash") else "error"
        detail = f"{detail}; {msg.splitlines()[0]}" if detail else msg.splitlines()[0]
    item.config._criteria[k] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter, config):
    rows = getattr(config, "_criteria", {})
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(rows):
        status, title, detail = rows[k]
        terminalreporter.write_line(f"criterion {k:>2} {status}  {title}: {detail}")
