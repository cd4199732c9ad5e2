import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; ``info=True`` marks a diagnostic, not a verdict."""

    def _report(label: str, ok: bool, detail: str, info: bool = False) -> bool:
        status = "INFO" if info else ("PASS" if ok else "FAIL")
        line = f"{status} {label}: {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
