"""Shared test configuration: per-criterion summary lines for the
acceptance suite."""

from __future__ import annotations


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import CRITERIA
    except ImportError:
        return
    outcomes: dict[str, str] = {}
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL"), ("skipped", "SKIP")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            if name in CRITERIA and (getattr(rep, "when", "call") == "call" or label != "PASS"):
                outcomes.setdefault(name, label)
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, title in CRITERIA.items():
        if name in outcomes:
            terminalreporter.write_line(f"[{outcomes[name]}] {title}")
