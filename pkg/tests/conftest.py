import pytest

from shapedither.dither import FirFilter, G1, G2

# Filters exercised across the suite.  Everything with K <= 8 is cheap to
# enumerate exhaustively for lags up to 3.
CORPUS = [
    G1,
    G2,
    FirFilter((1,)),
    FirFilter((1, 1)),
    FirFilter((1, -1)),
    FirFilter((1, 2, 1)),
    FirFilter((2, -1, 1)),
    FirFilter((1, 2, 4, 1)),
    FirFilter((-1, 2, -4, 8, -1)),
    FirFilter((3, -5, 1)),
    FirFilter((1, 1, 1, 1, 1, 1, 1, 1)),
    FirFilter((1, -3, 2, -2)),
]
SMALL_CORPUS = [f for f in CORPUS if f.K <= 8]

_criteria: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        number = marker.args[0]
        part = marker.args[1] if len(marker.args) > 1 else item.name
        measured = [f"{k}={_fmt(v)}" for k, v in report.user_properties]
        _criteria.setdefault(number, []).append((part, report.passed, measured))


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        parts = _criteria[number]
        ok = all(passed for _, passed, _ in parts)
        failed = [part for part, passed, _ in parts if not passed]
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += "  (failed: " + "; ".join(failed) + ")"
        tr.write_line(line)
        for part, passed, measured in parts:
            if measured:
                tr.write_line(f"    {'ok  ' if passed else 'FAIL'} {part}: " + ", ".join(measured))
