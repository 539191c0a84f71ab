import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one pass/fail line per acceptance criterion; printed in the
    terminal summary so the verdicts are visible on every run."""

    def record(criterion: str, ok: bool, detail: str = ""):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}" + (
            f" - {detail}" if detail else ""
        )
        _ACCEPTANCE_LINES.append(line)
        print(f"[acceptance] {line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
