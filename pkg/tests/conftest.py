import checks


def pytest_terminal_summary(terminalreporter):
    if checks.ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in sorted(checks.ACCEPTANCE_LOG, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
