import numpy as np
import pytest

from pqvi.config import load_config, shipped_configs
from pqvi.experiments import build_problem
from pqvi.grid import SpaceGrid, TimeGrid, assemble_operator


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small():
    sg, tg = SpaceGrid(1.0, 15), TimeGrid(1.0, 16)
    return sg, tg, assemble_operator(sg, 1.0)


def shipped_problem(name, **updates):
    cfg = load_config(shipped_configs()[name])
    if updates:
        cfg = cfg.replace(**updates)
    return build_problem(cfg)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
