"""Shared pytest wiring: acceptance-criterion bookkeeping.

Tests tagged with @pytest.mark.criterion("C7", "...") feed a summary section
printed at the end of the run, one pass/fail line per criterion.
"""

import pytest

_RESULTS: dict[tuple[str, str], str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(ident, title): tags a test as one acceptance criterion",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    ident, title = marker.args
    key = (ident, title)
    if report.when == "setup" and (report.failed or report.skipped):
        _RESULTS[key] = "FAIL" if report.failed else "SKIP"
    if report.when == "call":
        _RESULTS[key] = "PASS" if report.passed else (
            "SKIP" if report.skipped else "FAIL"
        )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for (ident, title), status in sorted(_RESULTS.items()):
        terminalreporter.write_line(f"[{status}] {ident}: {title}")
