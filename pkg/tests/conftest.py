"""Per-criterion PASS/FAIL summary for the acceptance suite.

Tests carry ``@pytest.mark.criterion(n, title)``; a criterion passes when
every test bearing its marker passes.  Tests may attach detail lines with
the ``criterion_note`` fixture.
"""

import pytest

_outcomes: dict[int, dict] = {}


def _entry(marker):
    n, title = marker.args
    return _outcomes.setdefault(n, {"title": title, "passed": True, "ran": False, "notes": []})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion carried by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _entry(marker)
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed:
        entry["passed"] = False


@pytest.fixture
def criterion_note(request):
    marker = request.node.get_closest_marker("criterion")
    entry = _entry(marker)
    return entry["notes"].append


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        e = _outcomes[n]
        verdict = "PASS" if e["passed"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {e['title']}")
        for note in e["notes"]:
            terminalreporter.write_line(f"    {note}")
