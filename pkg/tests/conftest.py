import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for one-line criterion verdicts, echoed again in the terminal summary."""

    def record(num, name: str, ok: bool | None, detail: str = "") -> bool | None:
        tag = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        line = f"[{tag}] criterion {num}: {name}" + (f" | {detail}" if detail else "")
        _LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
