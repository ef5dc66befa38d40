from functools import lru_cache

import pytest

from relayabc.adversary import StrategySpec
from relayabc.config import preset
from relayabc.simulation import run_simulation

ALL_STRATEGIES = {
    "constant_extreme": StrategySpec("constant_extreme", {"value": 100.0}),
    "silent": StrategySpec("silent"),
    "random_equivocate": StrategySpec("random_equivocate", {"low": -50.0, "high": 150.0}),
    "replay_stale": StrategySpec("replay_stale", {"age": 3, "value": -100.0}),
    "forge_attempt": StrategySpec("forge_attempt", {"value": 1000.0}),
    "future_marker": StrategySpec("future_marker", {"value": 100.0, "lead": 0}),
}


@lru_cache(maxsize=None)
def cached_run(name: str, strategy: str | None = None, seed: int = 0):
    config = preset(name)
    config.seed = seed
    if strategy is not None:
        config.strategies = {z: ALL_STRATEGIES[strategy] for z in config.strategies}
    return config, run_simulation(config)


@pytest.fixture(scope="session")
def run_preset():
    return cached_run
