import re

import pytest

import acceptance_report


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_criterion_(\d+)", item.name)
    if m and rep.when == "call" and rep.failed:
        n = int(m.group(1))
        if n not in acceptance_report.RESULTS:
            err = call.excinfo.typename if call.excinfo else "error"
            acceptance_report.RESULTS[n] = f"criterion {n:2d}: FAIL  raised {err}"


def pytest_terminal_summary(terminalreporter):
    lines = acceptance_report.summary()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
