"""Shared pytest wiring: echo the acceptance verdict lines after the run.

Output capture swallows anything the acceptance tests print while they
execute, so the verdict lines are buffered in the test module and replayed
here once capture is released.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    for name in ("test_acceptance", "tests.test_acceptance"):
        mod = sys.modules.get(name)
        if mod is not None and getattr(mod, "VERDICTS", None):
            terminalreporter.section("acceptance verdicts")
            for line in mod.VERDICTS:
                terminalreporter.write_line(line)
            break
