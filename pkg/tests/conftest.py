import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion exercised by the test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        results = item.config._criteria.setdefault(mark.args[0], [])
        results.append((item.name, rep.passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = config._criteria
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        ok = all(passed for _, passed, _ in crit[n])
        details = " | ".join(f"{name}: {d}" if d else name for name, _, d in crit[n])
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  ({details})")
