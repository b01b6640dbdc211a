import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line and fail the test if the check did not pass."""

    def record(number, title, ok, detail=""):
        RESULTS.append((number, title, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
        assert ok, f"criterion {number} ({title}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
