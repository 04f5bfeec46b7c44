"""
Run Configuration
=================

Pydantic models for a training run plus the flat key-value config loader.

Config files are dotenv-style documents, one `key=value` per line:

    env=pole_balance
    optimizer=satr
    pop_size=128
    generations=300
    seeds=0,1,2
    satr.eta=0.15
    topology.d_h=64
    env.horizon=500

Dotted keys address nested sections (satr, ec, tr, es, topology, env).
Topology d_in / d_out always follow the chosen environment.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path
from typing import Dict, List, Literal, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .environments import Environment, make_env
from .optimizers import EcConfig, EsConfig, SatrConfig, TrConfig
from .rsnn import Topology
from .run_store import load_run_config_dict

NESTED_SECTIONS = ("satr", "ec", "tr", "es", "topology", "env")
DEFAULT_OUTPUT = os.getenv("SATR_OUTPUT", "./runs")


class ConfigError(ValueError):
    """Config file missing, unreadable or invalid."""
    pass


def _split_csv(v):
    if isinstance(v, str):
        return [item.strip() for item in v.split(",") if item.strip()]
    return v


class EnvConfig(BaseModel):
    """Environment parameters; unset fields use the environment's defaults."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    horizon: Optional[int] = Field(default=None, ge=1)
    d: int = Field(default=64, ge=1, description="pattern_match dimension")
    target_seed: int = 0
    goal_distance: float = Field(default=1.0, gt=0.0)
    init_noise: float = Field(default=0.05, ge=0.0)

    def kwargs_for(self, name: str) -> Dict:
        if name == "pattern_match":
            return {"d": self.d, "seed": self.target_seed}
        kw: Dict = {}
        if self.horizon is not None:
            kw["horizon"] = self.horizon
        if name == "pointmass_reach":
            kw["goal_distance"] = self.goal_distance
        elif name == "pole_balance":
            kw["init_noise"] = self.init_noise
        return kw


class RunConfig(BaseModel):
    """Everything that determines a training run."""
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    env_name: Literal["pattern_match", "pointmass_reach", "pole_balance"] = Field(
        default="pole_balance", alias="env")
    env_params: EnvConfig = Field(default_factory=EnvConfig)
    # pattern_match scores theta directly unless told otherwise
    direct: Optional[bool] = None

    optimizer: Literal["satr", "ec", "ec_tr", "es"] = "satr"
    pop_size: int = Field(default=256, ge=2)
    generations: int = Field(default=100, ge=1)
    satr: SatrConfig = Field(default_factory=SatrConfig)
    ec: EcConfig = Field(default_factory=EcConfig)
    tr: TrConfig = Field(default_factory=TrConfig)
    es: EsConfig = Field(default_factory=EsConfig)

    topology: Topology = Field(default_factory=Topology)
    engine: Literal["bitset", "dense"] = "bitset"
    init_prob: float = Field(default=0.5, gt=0.0, lt=1.0)
    clamp_eps: float = Field(default=1e-3, gt=0.0, lt=0.5)

    seeds: List[int] = Field(default_factory=lambda: [0])
    eval_episodes: int = Field(default=128, ge=1)
    eval_every: int = Field(default=10, ge=1)
    eval_mode: Literal["sample", "map"] = "sample"

    workers: int = Field(default_factory=lambda: int(os.getenv("SATR_WORKERS", "1")), ge=1)
    log_dir: str = DEFAULT_OUTPUT

    @field_validator("seeds", mode="before")
    @classmethod
    def parse_seeds(cls, v):
        return _split_csv(v)

    @model_validator(mode="after")
    def validate_combination(self):
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if self.optimizer == "es" and self.is_direct:
            raise ValueError("es optimizes real weights and cannot run in direct mode")
        if self.direct and self.env_name != "pattern_match":
            raise ValueError("direct mode scores theta itself and only exists for pattern_match")
        return self

    @property
    def is_direct(self) -> bool:
        if self.direct is None:
            return self.env_name == "pattern_match"
        return self.direct

    def build_env(self) -> Environment:
        return make_env(self.env_name, **self.env_params.kwargs_for(self.env_name))

    def resolved_topology(self) -> Topology:
        """Topology with d_in / d_out taken from the environment."""
        env = self.build_env()
        return self.topology.model_copy(update={"d_in": env.obs_dim, "d_out": env.act_dim})

    def search_dim(self) -> int:
        """Length of the optimized vector (rho or ES weights)."""
        if self.is_direct:
            return self.build_env().act_dim
        return self.resolved_topology().synapse_count

    def with_overrides(self, **updates) -> "RunConfig":
        """Re-validated copy with top-level fields replaced."""
        data = self.model_dump(by_alias=True)
        data.update({k: v for k, v in updates.items() if v is not None})
        return RunConfig.model_validate(data)

    def fingerprint(self) -> str:
        """Hash of the fields that must match for a checkpoint to resume."""
        payload = self.model_dump_json(
            by_alias=True, exclude={"workers", "log_dir", "generations", "seeds"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def parse_flat(values: Dict[str, Optional[str]]) -> Dict:
    """Turn dotted flat keys into the nested dict RunConfig expects."""
    nested: Dict = {}
    for raw_key, value in values.items():
        key = raw_key.strip().lower()
        if value is None:
            raise ConfigError(f"key '{raw_key}' has no value")
        value = value.strip()
        if "." in key:
            section, sub = key.split(".", 1)
            if section not in NESTED_SECTIONS:
                raise ConfigError(f"unknown config section '{section}' in key '{raw_key}'")
            target = "env_params" if section == "env" else section
            if section == "topology" and sub == "substep_pattern":
                value = _split_csv(value)
            nested.setdefault(target, {})[sub] = value
        else:
            nested[key] = value
    return nested


def load_run_config(path: Path, **overrides) -> RunConfig:
    """
    Load and validate a flat config file.

    Raises:
        FileNotFoundError if the file doesn't exist
        ConfigError if a key or value is invalid
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config not found at {path}")
    data = parse_flat(dotenv_values(path))
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid run config at {path}:\n{e}") from e


def load_saved_run_config(run_dir: Path, **overrides) -> RunConfig:
    """
    Load the config.json that training wrote into a run directory.

    Raises:
        FileNotFoundError if the run has no saved config
        ConfigError if the saved config no longer validates
    """
    data = load_run_config_dict(run_dir)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid saved run config in {run_dir}:\n{e}") from e
