from __future__ import annotations

CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        status, detail = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")
