import pytest

from ota_formation.config import load_config
from ota_formation.dynamics import simulate
from ota_formation.geometry import SafetyParams


@pytest.fixture
def safety():
    return SafetyParams(4.0, 8.0)


@pytest.fixture(scope="session")
def hexagon_config():
    return load_config(preset="hexagon6").config


@pytest.fixture(scope="session")
def hexagon_run(hexagon_config):
    return simulate(hexagon_config)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
