"""Collects one verdict line per acceptance criterion and prints them after the run."""
import pytest

VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, passed: bool, detail: str) -> bool:
        VERDICTS[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])
