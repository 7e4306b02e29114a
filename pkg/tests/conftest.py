"""
Shared fixtures: a two-household scenario small enough to roll through a full day
in a few seconds.
"""

import pytest

from v2x_stacking.core.scenario import CommunityConfig, ScenarioConfig, materialize, save_config


@pytest.fixture(scope="session")
def tiny_config() -> ScenarioConfig:
    """Two households on one node, no feeder, V2H and V2G only."""
    return ScenarioConfig(
        name="tiny",
        communities=[CommunityConfig(node=4, count=2)],
        streams="v2h,v2g",
        days=2,
        network=False,
    )


@pytest.fixture(scope="session")
def tiny_scenario(tiny_config):
    return materialize(tiny_config)


@pytest.fixture
def tiny_config_file(tmp_path, tiny_config):
    """The tiny scenario written as YAML."""
    return save_config(tiny_config.with_overrides(days=1), tmp_path / "tiny.yaml")
