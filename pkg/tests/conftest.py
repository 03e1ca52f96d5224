"""Acceptance-report plumbing: one visible line per criterion after the run."""

import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Recorder for acceptance outcomes, echoed in the terminal summary."""

    def record(criterion: int, passed: bool, detail: str) -> None:
        status = "PASS" if passed else "FAIL"
        _LINES.append(f"criterion {criterion}: {status} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
