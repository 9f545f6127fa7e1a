from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from fockrg.initial import InitialSeriesConfig, ToyModel, initial_kernel
from fockrg.kernel_space import RadialGrid
from fockrg.solver import SolverConfig, ground_state

FIXTURES = Path(__file__).parent / "fixtures"
CONFIGS = Path(__file__).parent.parent / "configs"


@pytest.fixture(scope="session")
def oracles() -> dict:
    return json.loads((FIXTURES / "oracles.json").read_text())


@pytest.fixture(scope="session")
def reference_model() -> ToyModel:
    return ToyModel()


@pytest.fixture(scope="session")
def reference_state(reference_model):
    """Full pipeline on the reference model: 10 steps, eigenvector and physical lift."""
    return ground_state(reference_model, SolverConfig())


@pytest.fixture(scope="session")
def reference_w0(reference_model):
    return initial_kernel(reference_model, InitialSeriesConfig()).kernel


@pytest.fixture(scope="session")
def coarse_grid() -> RadialGrid:
    return RadialGrid(n_r=9, n_k=4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid or getattr(rep, "when", "call") != "call" and outcome != "error":
                continue
            props = dict(getattr(rep, "user_properties", []))
            name = props.get("criterion", nodeid.split("::")[-1])
            detail = props.get("detail", "")
            tag = "PASS" if outcome == "passed" else "FAIL"
            lines.append((props.get("order", 99), f"{tag}  {name}: {detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
