"""Print one PASS/FAIL line per acceptance criterion at the end of the run."""

import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_outcomes: dict[int, tuple[str, str, list]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m is None:
        return
    number, name = int(m.group(1)), m.group(2)
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _outcomes[number] = (status, name, list(report.user_properties))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        status, name, props = _outcomes[number]
        terminalreporter.write_line(f"criterion {number:2d} {name:<32s} {status}")
        for key, value in props:
            terminalreporter.write_line(f"      {key}: {value}")
