import pytest

from xorhash import Op, Query, Trace


def make_trace(items, key_bits=16, value_bits=16):
    """``items`` are ``(op_letter, key[, value])`` tuples."""
    letters = {"S": Op.SEARCH, "I": Op.INSERT, "U": Op.UPDATE, "D": Op.DELETE}
    qs = []
    for i, item in enumerate(items):
        op = letters[item[0]]
        qs.append(Query(op, item[1], item[2] if len(item) > 2 else None, i))
    return Trace.from_queries(qs, key_bits, value_bits)


_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and call.excinfo is not None:
        detail = f"{detail} [{call.excinfo.typename}: {str(call.excinfo.value).splitlines()[0][:120]}]".strip()
    _ACCEPTANCE.append((marker.args[0], rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, passed, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[0][2:])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
