from collections import OrderedDict

import pytest

_RESULTS: "OrderedDict[str, list]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        ok = rep.passed and not hasattr(rep, "wasxfail")
        note = "expected failure, see decisions ledger" if hasattr(rep, "wasxfail") and rep.skipped else ""
        _RESULTS.setdefault(mark.args[0], []).append((item.name, ok, note))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for label, rows in sorted(_RESULTS.items(), key=lambda kv: _sort_key(kv[0])):
        status = "PASS" if all(ok for _, ok, _ in rows) else "FAIL"
        failed = [f"{name} ({note})" if note else name for name, ok, note in rows if not ok]
        tr.write_line(f"criterion {label}: {status}" + (f"  [{'; '.join(failed)}]" if failed else ""))


def _sort_key(label):
    head = "".join(ch for ch in label if ch.isdigit())
    return int(head or 0), label
