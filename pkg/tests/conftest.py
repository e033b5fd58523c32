"""Shared pytest hooks.

Acceptance tests register their one-line verdicts here so they are echoed
in the terminal summary, where output capturing cannot swallow them (a
passing test's stdout is normally hidden).
"""

VERDICT_LINES: list[str] = []


def record_verdict(line: str) -> None:
    VERDICT_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if VERDICT_LINES:
        terminalreporter.section("acceptance verdicts")
        for line in VERDICT_LINES:
            terminalreporter.write_line(line)
