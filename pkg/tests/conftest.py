"""Shared test plumbing: the acceptance gate's verdict report.

Gate tests register one line per criterion; the lines are printed in the
terminal summary so they stay visible under output capture.
"""

ACCEPTANCE_RESULTS: "list[tuple[bool, str]]" = []


def record_verdict(ok: bool, label: str) -> None:
    ACCEPTANCE_RESULTS.append((ok, label))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance gate")
    for ok, label in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {label}")
