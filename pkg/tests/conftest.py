import os

import pytest

from wbsim.harness import load_scenario, run_scenario

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "scenarios")

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
CRITERIA = {}


def record(number: int, title: str, passed: bool, detail: str):
    CRITERIA[number] = (title, bool(passed), detail)
    return passed


def scenario_path(name: str) -> str:
    return os.path.join(SCENARIO_DIR, name)


_RUNS = {}


def scenario_run(name: str):
    """Run a shipped scenario once per session and share the result."""
    if name not in _RUNS:
        _RUNS[name] = run_scenario(load_scenario(scenario_path(name)))
    return _RUNS[name]


@pytest.fixture(scope="session")
def runs():
    return scenario_run


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
