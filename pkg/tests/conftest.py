import pytest

_criteria: dict[str, bool] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call" or report.failed:
        _criteria[name] = _criteria.get(name, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")

    def order(name):
        head = name.split(" ", 1)[0]
        return (int(head), name) if head.isdigit() else (999, name)

    for name in sorted(_criteria, key=order):
        status = "PASS" if _criteria[name] else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {name}")
