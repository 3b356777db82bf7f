import pytest

_LINES = []


@pytest.fixture
def report():
    """Record a one-line verdict; all verdicts are printed after the run."""

    def add(label, ok, detail=""):
        _LINES.append(f"{label}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else ""))
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
