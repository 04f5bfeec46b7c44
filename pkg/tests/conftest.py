"""Shared fixtures: small topologies, seeded generators, quick run configs."""

import numpy as np
import pytest

from core.rsnn import Topology
from core.run_config import EnvConfig, RunConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def make_topology():
    def factory(**overrides) -> Topology:
        base = dict(d_in=3, d_h=16, d_out=2, substeps=5)
        base.update(overrides)
        return Topology(**base)
    return factory


@pytest.fixture
def quick_rsnn_config(tmp_path):
    """Pointmass with a tiny RSNN: a few rollouts per second of test time."""
    def factory(**overrides) -> RunConfig:
        base = dict(
            env="pointmass_reach",
            env_params=EnvConfig(horizon=5),
            topology=Topology(d_h=8, substeps=3),
            pop_size=6,
            generations=2,
            eval_episodes=3,
            eval_every=1,
            workers=1,
            log_dir=str(tmp_path / "runs"),
        )
        base.update(overrides)
        return RunConfig(**base)
    return factory


@pytest.fixture
def quick_direct_config(tmp_path):
    """pattern_match scored on theta directly."""
    def factory(**overrides) -> RunConfig:
        base = dict(
            env="pattern_match",
            env_params=EnvConfig(d=10),
            pop_size=16,
            generations=1,
            eval_episodes=4,
            workers=1,
            log_dir=str(tmp_path / "runs"),
        )
        base.update(overrides)
        return RunConfig(**base)
    return factory
