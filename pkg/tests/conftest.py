"""Shared fixtures. Expensive pre-training runs once per session."""

import numpy as np
import pytest

from hybridanc.controllers import HybridConfig
from hybridanc.harness import build_setup
from hybridanc.paths import synth_paths


@pytest.fixture(scope="session")
def paths0():
    return synth_paths(0)


@pytest.fixture(scope="session")
def default_cfg():
    return HybridConfig()


@pytest.fixture(scope="session")
def setup_full(default_cfg):
    """Default-size setup: 1024-tap filters, 8 sub-filters, 7 SFANC filters."""
    return build_setup(default_cfg, path_seed=0, train_seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
