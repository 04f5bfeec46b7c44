"""
SATR Core Modules
=================

Signal-adaptive trust-region optimization of binary connectivity for
recurrent spiking network policies: Bernoulli search distribution, fitness
shaping, update rules, bitset LIF engine, environments, training loop and
the analytical energy model.
"""

__version__ = "1.0.0"

from .bernoulli_dist import (
    ConnectivitySample,
    ProbVector,
    SeedTag,
    ShapeMismatchError,
    clamp,
    fisher_diag,
    kl_exact,
    kl_quadratic,
    sample,
    sample_population,
    score,
)
from .fitness_shaping import (
    NaturalGradient,
    PopulationTooSmallError,
    ReturnBatch,
    centered_rank,
    natural_gradient_estimate,
)
from .optimizers import (
    EcConfig,
    EsConfig,
    SatrConfig,
    TrConfig,
    apply_update,
    ec_step,
    ec_tr_step,
    es_step,
    satr_step,
)
from .bitset_engine import (
    bench_kernel,
    masked_popcount_dot,
    pack,
    pack_matrix,
    signed_integrate,
    unpack,
)
from .rsnn import (
    LifState,
    Topology,
    instantiate,
    instantiate_dense,
    model_footprint,
    policy_step,
    reset,
    rollout,
)
from .environments import EpisodeDoneError, make_env
from .energy_estimator import (
    EnergyParams,
    energy_per_rollout,
    energy_table,
    measured_spike_rate,
    total_energy,
)
from .run_config import ConfigError, RunConfig, load_run_config, load_saved_run_config
from .run_store import CheckpointError, GenerationLog, load_checkpoint
from .runner import RolloutError, evaluate_policy, run_generation, sweep, train

__all__ = [
    "ConnectivitySample",
    "ProbVector",
    "SeedTag",
    "ShapeMismatchError",
    "clamp",
    "fisher_diag",
    "kl_exact",
    "kl_quadratic",
    "sample",
    "sample_population",
    "score",
    "NaturalGradient",
    "PopulationTooSmallError",
    "ReturnBatch",
    "centered_rank",
    "natural_gradient_estimate",
    "EcConfig",
    "EsConfig",
    "SatrConfig",
    "TrConfig",
    "apply_update",
    "ec_step",
    "ec_tr_step",
    "es_step",
    "satr_step",
    "bench_kernel",
    "masked_popcount_dot",
    "pack",
    "pack_matrix",
    "signed_integrate",
    "unpack",
    "LifState",
    "Topology",
    "instantiate",
    "instantiate_dense",
    "model_footprint",
    "policy_step",
    "reset",
    "rollout",
    "EpisodeDoneError",
    "make_env",
    "EnergyParams",
    "energy_per_rollout",
    "energy_table",
    "measured_spike_rate",
    "total_energy",
    "ConfigError",
    "RunConfig",
    "load_run_config",
    "load_saved_run_config",
    "CheckpointError",
    "GenerationLog",
    "load_checkpoint",
    "RolloutError",
    "evaluate_policy",
    "run_generation",
    "sweep",
    "train",
]
