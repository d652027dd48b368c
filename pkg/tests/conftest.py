import sys
from pathlib import Path

# Lets test modules import the shared brute-force oracles.
sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.pytest_terminal_summary_lines():
        terminalreporter.write_line(line)
