"""Shared test plumbing: the acceptance suite's verdict ledger.

Acceptance tests append one line per criterion; the lines are echoed after
the run so the pass/fail record survives output capture.
"""

verdicts: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
