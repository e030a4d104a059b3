import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Keep one verdict per acceptance criterion for the end-of-run summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE, key=lambda k: int(str(k).rstrip("abc"))):
        ok, detail = ACCEPTANCE[c]
        terminalreporter.write_line(f"CRITERION {c}: {'PASS' if ok else 'FAIL'} {detail}")
