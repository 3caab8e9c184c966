from __future__ import annotations

import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""

    def _record(criterion: str, passed: bool, detail: str) -> None:
        _RESULTS[criterion] = (bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_RESULTS, key=lambda s: int(s.split()[1])):
        ok, detail = _RESULTS[name]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
