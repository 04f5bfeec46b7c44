"""
Bernoulli Distribution
======================

Factorized Bernoulli sampling distribution over binary connectivity.

Features:
- ProbVector: validated parameter vector, clamped to [eps, 1 - eps]
- Counter-based sampling keyed by (run seed, stream, generation, member)
- Score function and diagonal Fisher information
- Exact and local quadratic KL divergence (nats)

Sampling never touches global random state, so a population can be
regenerated member by member, in any order, from its seed tags alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_CLAMP_EPS = 1e-3
DEFAULT_INIT_PROB = 0.5

# Stream ids keep training, evaluation and ES noise draws disjoint.
STREAM_TRAIN = 0
STREAM_EVAL = 1
STREAM_ES_NOISE = 2
STREAM_INIT = 3


class ShapeMismatchError(ValueError):
    """Vectors that must share a dimension do not."""
    pass


# ---------- Types ----------

@dataclass(frozen=True)
class SeedTag:
    """Key of one deterministic draw: (run_seed, stream, generation, member)."""
    run_seed: int
    generation: int
    member: int
    stream: int = STREAM_TRAIN

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.run_seed,
            spawn_key=(self.stream, self.generation, self.member),
        )

    def generator(self) -> np.random.Generator:
        """Philox generator whose counter starts at zero for this tag."""
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def episode_seed(self) -> int:
        """Environment reset seed for this member, independent of its Philox stream."""
        child = np.random.SeedSequence(
            entropy=self.run_seed,
            spawn_key=(self.stream, self.generation, self.member, 1),
        )
        return int(child.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class ProbVector:
    """
    Bernoulli parameters rho in [clamp_eps, 1 - clamp_eps]^d.

    The array is stored read-only so a ProbVector can be shared by rollout
    workers without copies.
    """
    probs: np.ndarray
    clamp_eps: float = DEFAULT_CLAMP_EPS

    def __post_init__(self) -> None:
        if not 0.0 < self.clamp_eps < 0.5:
            raise ValueError(f"clamp_eps must be in (0, 0.5), got {self.clamp_eps}")
        p = np.array(self.probs, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(p)):
            raise ValueError("probs must be finite")
        lo, hi = self.clamp_eps, 1.0 - self.clamp_eps
        if p.size and (p.min() < lo or p.max() > hi):
            raise ValueError(
                f"probs outside [{lo}, {hi}]: min={p.min():.6g} max={p.max():.6g}; use clamp()"
            )
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def dim(self) -> int:
        return int(self.probs.size)

    @classmethod
    def uniform(cls, dim: int, init: float = DEFAULT_INIT_PROB,
                clamp_eps: float = DEFAULT_CLAMP_EPS) -> "ProbVector":
        """Constant initialization (0.5 = maximum entropy)."""
        return clamp(np.full(dim, init, dtype=np.float64), clamp_eps)

    def variance(self) -> np.ndarray:
        """rho * (1 - rho) per coordinate."""
        return self.probs * (1.0 - self.probs)


@dataclass(frozen=True)
class ConnectivitySample:
    """Binary connectivity theta plus the tag that regenerates it."""
    bits: np.ndarray
    seed_tag: SeedTag

    @property
    def dim(self) -> int:
        return int(self.bits.size)


# ---------- Operations ----------

def clamp(rho_raw: np.ndarray, eps: float = DEFAULT_CLAMP_EPS) -> ProbVector:
    """Project every component onto [eps, 1 - eps]."""
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must be in (0, 0.5), got {eps}")
    raw = np.asarray(rho_raw, dtype=np.float64).reshape(-1)
    clipped = np.clip(raw, eps, 1.0 - eps)
    n_clipped = int(np.count_nonzero(clipped != raw))
    if n_clipped:
        logger.debug("clamp: %d/%d coordinates hit the boundary", n_clipped, raw.size)
    return ProbVector(clipped, clamp_eps=eps)


def sample(rho: ProbVector, seed_tag: SeedTag) -> ConnectivitySample:
    """
    Draw theta_i ~ Bernoulli(rho_i) independently.

    Coordinate i consumes the i-th uniform of the Philox stream keyed by
    seed_tag, so the same (rho, seed_tag) always yields the same bits.
    """
    u = seed_tag.generator().random(rho.dim)
    bits = (u < rho.probs).astype(np.uint8)
    bits.setflags(write=False)
    return ConnectivitySample(bits=bits, seed_tag=seed_tag)


def sample_population(
    rho: ProbVector,
    run_seed: int,
    generation: int,
    pop_size: int,
    stream: int = STREAM_TRAIN,
) -> list[ConnectivitySample]:
    """Sample members 0..pop_size-1 of one generation."""
    return [
        sample(rho, SeedTag(run_seed=run_seed, generation=generation, member=n, stream=stream))
        for n in range(pop_size)
    ]


def stack_bits(samples: Sequence[ConnectivitySample]) -> np.ndarray:
    """(N, d) float64 matrix of sampled bits."""
    if not samples:
        raise ValueError("no samples to stack")
    return np.stack([s.bits for s in samples]).astype(np.float64)


def score(rho: ProbVector, theta: ConnectivitySample) -> np.ndarray:
    """Score (theta - rho) / (rho (1 - rho)) of the factorized Bernoulli."""
    _check_dim(rho.dim, theta.dim, "theta")
    return (theta.bits - rho.probs) / rho.variance()


def fisher_diag(rho: ProbVector) -> np.ndarray:
    """Diagonal Fisher information 1 / (rho (1 - rho))."""
    return 1.0 / rho.variance()


def kl_exact(rho: ProbVector, rho2: ProbVector) -> float:
    """KL(p_rho || p_rho2), summed over independent coordinates, in nats."""
    _check_dim(rho.dim, rho2.dim, "rho2")
    p, q = rho.probs, rho2.probs
    terms = p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))
    # Rounding can push identical-coordinate terms a hair below zero.
    return float(max(terms.sum(), 0.0))


def kl_quadratic(rho: ProbVector, delta: np.ndarray) -> float:
    """Local KL model (1/2) sum delta_i^2 / (rho_i (1 - rho_i))."""
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    _check_dim(rho.dim, delta.size, "delta")
    return float(0.5 * np.sum(delta * delta / rho.variance()))


def concat(parts: Iterable[ProbVector]) -> ProbVector:
    """Concatenate independent factors (they must share clamp_eps)."""
    parts = list(parts)
    eps = {p.clamp_eps for p in parts}
    if len(eps) != 1:
        raise ValueError(f"cannot concatenate ProbVectors with different clamp_eps: {eps}")
    return ProbVector(np.concatenate([p.probs for p in parts]), clamp_eps=eps.pop())


def _check_dim(expected: int, got: int, name: str) -> None:
    if expected != got:
        raise ShapeMismatchError(f"{name} has dimension {got}, expected {expected}")
