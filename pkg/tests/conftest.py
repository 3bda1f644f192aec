import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    # one visible line per acceptance criterion, independent of capture mode
    criterion = getattr(item.function, "_acceptance_criterion", None)
    if criterion and report.when == "call":
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        terminal = item.config.pluginmanager.get_plugin("terminalreporter")
        if terminal is not None:
            terminal.write_line(f"[{status}] acceptance criterion {criterion}")


def acceptance(criterion: str):
    def mark(fn):
        fn._acceptance_criterion = criterion
        return fn

    return mark
