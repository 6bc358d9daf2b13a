import pytest

ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Store one acceptance line; several records for a criterion are AND-ed."""
    prev = ACCEPTANCE.get(criterion)
    line_ok = bool(ok) and (prev is None or prev[0])
    details = detail if prev is None else prev[1] + "; " + detail
    ACCEPTANCE[criterion] = (line_ok, details)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
