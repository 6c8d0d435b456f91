import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from caimhng.env import AgentSpec, Grid  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def paper_grid():
    return Grid(4, 2)


@pytest.fixture
def paper_specs(paper_grid):
    g = paper_grid
    return (AgentSpec("A", g.index(0, 0), g.index(0, 2)),
            AgentSpec("B", g.index(1, 3), g.index(0, 3)))


@pytest.fixture(scope="session")
def default_config_path():
    return ROOT / "configs" / "default.json"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
