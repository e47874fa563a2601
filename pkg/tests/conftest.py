import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and short description")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n, text = mark.args
    detail = dict(item.user_properties).get("detail", "")
    item.config._criteria[n] = (text, rep.passed, detail)


def pytest_terminal_summary(terminalreporter, config):
    crit = config._criteria
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        text, ok, detail = crit[n]
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {text}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
