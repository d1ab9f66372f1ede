"""
Shared fixtures for the DMBN test suite.

Monte-Carlo heavy checks are marked `slow` and only run with --runslow.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# top-level modules (config, main) live at the repository root
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from config import GibbsConfig  # noqa: E402
from models.dmbn import LatentState  # noqa: E402
from models.network import AdjacencyTensor  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte-Carlo tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte-Carlo acceptance test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_network(rng: np.random.Generator, n_nodes: int, n_layers: int, n_times: int,
                   density: float = 0.3) -> AdjacencyTensor:
    """Symmetric loop-free Bernoulli network"""
    draws = rng.random((n_times, n_layers, n_nodes, n_nodes)) < density
    upper = np.triu(draws, k=1)
    A = (upper | np.swapaxes(upper, 2, 3)).astype(np.uint8)
    return AdjacencyTensor(A, np.arange(1, n_times + 1, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tiny_network(rng):
    return random_network(rng, n_nodes=6, n_layers=2, n_times=4)


@pytest.fixture
def tiny_latent(rng):
    return LatentState.from_prior(
        n_blocks=3, n_layers=2, times=np.arange(1, 5, dtype=float), n_cross=2, n_within=2, rng=rng
    )


def small_config(**changes) -> GibbsConfig:
    """Short, seeded chain settings for sampler tests"""
    settings = dict(iterations=12, burnin=0.25, thin=2, n_blocks=2, n_cross=1, n_within=1,
                    seed=5, progress=False)
    settings.update(changes)
    return GibbsConfig(**settings)
