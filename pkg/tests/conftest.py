"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import pytest

_ACCEPTANCE = "test_acceptance.py"
_results: dict[str, dict] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        if item.nodeid.split("::")[0].endswith(_ACCEPTANCE) and item.function.__doc__:
            title = item.function.__doc__.strip().splitlines()[0]
            _results[item.nodeid] = {"title": title, "outcome": "not run", "measured": ""}


def pytest_deselected(items):
    for item in items:
        _results.pop(item.nodeid, None)


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_logreport(report):
    entry = _results.get(report.nodeid)
    if entry is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        if entry["outcome"] in ("not run", "passed"):
            entry["outcome"] = "skipped" if report.skipped else ("passed" if report.passed else "failed")
        for name, value in report.user_properties:
            if name == "measured":
                entry["measured"] = value


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for entry in _results.values():
        status = {"passed": "PASS", "failed": "FAIL"}.get(entry["outcome"], entry["outcome"].upper())
        line = f"{status:<5} {entry['title']}"
        if entry["measured"]:
            line += f"  [{entry['measured']}]"
        terminalreporter.write_line(line)


@pytest.fixture
def measured(request):
    """Attaches a short description of the measured values to the summary line."""

    def record(text: str) -> None:
        request.node.user_properties.append(("measured", text))

    return record
