import pytest

from graphnav.dataset import collect_dataset
from graphnav.expert import ExpertParams
from graphnav.graph import GraphConfig
from graphnav.layout import COMMANDS
from graphnav.world import ScenarioConfig


@pytest.fixture(scope="session")
def graph_cfg():
    return GraphConfig()


@pytest.fixture(scope="session")
def tiny_dataset():
    """A small but real demonstration set: 2 episodes per command, density 2."""
    cfg = ScenarioConfig(density=2, timeout_s=25.0)
    dataset, _rates = collect_dataset(
        cfg, GraphConfig(), ExpertParams(),
        episodes_per_command=2, base_seed=7,
        densities={c: 2 for c in COMMANDS},
    )
    return dataset
