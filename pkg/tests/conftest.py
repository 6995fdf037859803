"""Collects one pass/fail line per acceptance criterion for the terminal summary."""
import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def measured(request):
    """Tests call ``measured("key", value)`` to show numbers next to their verdict."""
    marker = request.node.get_closest_marker("criterion")
    details = _RESULTS.setdefault(marker.args[0], {"title": marker.args[1], "details": [],
                                                   "outcomes": []})["details"]

    def note(key, value):
        details.append(f"{key}={value:.4g}" if isinstance(value, float) else f"{key}={value}")
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        entry = _RESULTS.setdefault(marker.args[0], {"title": marker.args[1], "details": [],
                                                     "outcomes": []})
        entry["outcomes"].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        verdict = "PASS" if entry["outcomes"] and all(entry["outcomes"]) else "FAIL"
        line = f"[{verdict}] criterion {number:2d}: {entry['title']}"
        if entry["details"]:
            line += "  (" + ", ".join(entry["details"]) + ")"
        terminalreporter.write_line(line)
