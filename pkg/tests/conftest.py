import pytest

_verdicts: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if report.when == "call" or report.failed:
        prev = _verdicts.get(n)
        ok = report.passed and (prev is None or prev[0] == "PASS")
        _verdicts[n] = ("PASS" if ok else "FAIL", title, report.duration + (prev[2] if prev else 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_verdicts):
        verdict, title, secs = _verdicts[n]
        terminalreporter.write_line(f"criterion {n}: {verdict}  {title}  ({secs:.1f} s)")
