ACCEPTANCE_MODULE = "test_acceptance"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    reports = []
    for key in ("passed", "failed", "error"):
        reports.extend(terminalreporter.stats.get(key, []))
    acceptance = [
        rep for rep in reports
        if getattr(rep, "when", "call") == "call" and ACCEPTANCE_MODULE in rep.nodeid
    ]
    if not acceptance:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("=== acceptance criteria ===")
    for rep in sorted(acceptance, key=lambda r: r.nodeid):
        status = "PASS" if rep.passed else "FAIL"
        name = rep.nodeid.split("::")[-1]
        terminalreporter.write_line(f"{status}  {name}")
