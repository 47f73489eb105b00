import re

_CRITERIA: dict[str, tuple[str, str]] = {}
_NAME = re.compile(r"test_acceptance\.py::test_(criterion_\d+|supplementary_\w+)")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m or (report.when != "call" and report.passed):
        return
    detail = dict(report.user_properties).get("detail", "")
    prev = _CRITERIA.get(m.group(1))
    if prev and prev[0] == "FAIL":
        return
    _CRITERIA[m.group(1)] = ("PASS" if report.passed else "FAIL", detail)


def _order(key):
    kind, _, rest = key.partition("_")
    return (kind != "criterion", int(rest) if rest.isdigit() else 0, rest)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=_order):
        status, detail = _CRITERIA[key]
        label = key.replace("_", " ")
        tr.write_line(f"{label:<40} {status}  {detail}".rstrip())
