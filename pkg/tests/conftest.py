"""Pytest wiring for the acceptance scorecard.

The acceptance tests append one line per criterion; echoing them in a
terminal section means a full run always ends with the scorecard, even
with output capture on.
"""


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
