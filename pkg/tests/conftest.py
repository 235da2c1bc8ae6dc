import pytest

# acceptance tests append (criterion, passed, detail) here; printed once at the end
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def _report(criterion, passed, detail):
        ACCEPTANCE_LINES.append((criterion, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}")
        assert passed, detail

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {criterion:>2}: {detail}")
