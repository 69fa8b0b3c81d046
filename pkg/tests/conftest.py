from pathlib import Path

import pytest

from fihde.scenario import load

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def logistic():
    return load(SCENARIOS / "logistic.toml")


@pytest.fixture(scope="session")
def hybrid():
    return load(SCENARIOS / "hybrid.toml")


@pytest.fixture(scope="session")
def powerlaw():
    return load(SCENARIOS / "powerlaw.toml")


@pytest.fixture(scope="session")
def constant():
    return load(SCENARIOS / "constant.toml")


# acceptance verdicts, filled by tests/test_acceptance.py and printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
