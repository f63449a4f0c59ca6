from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return Path(__file__).resolve().parent.parent


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_c" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            lines[name] = status.upper()
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(lines):
        terminalreporter.write_line(f"{lines[name]:>7}  {name}")
