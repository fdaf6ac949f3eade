from collections import defaultdict

_criteria: dict[int, list[bool]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            item.user_properties.append(("criterion", marker.args[0]))


def pytest_runtest_logreport(report):
    numbers = [v for k, v in report.user_properties if k == "criterion"]
    if not numbers:
        return
    # an expected failure still counts as a failed criterion
    ok = report.passed and not hasattr(report, "wasxfail")
    if report.when == "call" or not ok:
        _criteria[numbers[0]].append(ok)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status = "PASS" if all(_criteria[number]) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}")
