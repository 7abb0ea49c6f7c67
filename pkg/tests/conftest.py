import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """``criterion(k, ok, detail)`` records one pass/fail line, prints it and asserts ``ok``."""

    def record(k, ok, detail):
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES[k] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_LINES):
            terminalreporter.write_line(_LINES[k])
