import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the acceptance scorecard after capture ends, if it ran."""
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance scorecard")
        for line in verdicts:
            terminalreporter.write_line(line)
