"""
Fitness Shaping
===============

Centered-rank return shaping and the population natural-gradient estimate.

Features:
- Centered ranks in [-1/2, 1/2] with average-rank tie handling
- Invariance to any strictly monotone transform of the raw returns
- Natural gradient g = (1/N) sum_n shaped_n (theta_n - rho) and its signal energy
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bernoulli_dist import ConnectivitySample, ProbVector, ShapeMismatchError, stack_bits


class PopulationTooSmallError(ValueError):
    """Ranking needs at least two members."""
    pass


@dataclass(frozen=True)
class ReturnBatch:
    """Raw episodic returns of one generation and their centered ranks."""
    raw: np.ndarray
    shaped: np.ndarray

    @classmethod
    def from_raw(cls, raw: Sequence[float]) -> "ReturnBatch":
        raw_arr = np.asarray(raw, dtype=np.float64)
        return cls(raw=raw_arr, shaped=centered_rank(raw_arr))

    @property
    def mean(self) -> float:
        # np.sum is pairwise and independent of how the returns were produced
        return float(np.sum(self.raw) / self.raw.size)

    @property
    def max(self) -> float:
        return float(self.raw.max())


@dataclass(frozen=True)
class NaturalGradient:
    """Population estimate g, its signal energy ||g||^2 and the population size."""
    g: np.ndarray
    energy: float
    pop_size: int

    @classmethod
    def from_vector(cls, g: np.ndarray, pop_size: int) -> "NaturalGradient":
        g = np.asarray(g, dtype=np.float64)
        return cls(g=g, energy=float(np.dot(g, g)), pop_size=pop_size)

    @property
    def has_signal(self) -> bool:
        return self.energy > 0.0


def centered_rank(raw: Sequence[float]) -> np.ndarray:
    """
    Map returns to (rank - 1)/(N - 1) - 1/2.

    Ties share the mean of their rank positions, so the output sums to zero
    and only depends on the ordering of `raw`.

    Raises:
        PopulationTooSmallError: fewer than two returns
        ValueError: non-finite return
    """
    x = np.asarray(raw, dtype=np.float64).reshape(-1)
    n = x.size
    if n < 2:
        raise PopulationTooSmallError("population too small to rank")
    if not np.all(np.isfinite(x)):
        raise ValueError("returns must be finite to rank")

    # np.unique sorts; inverse maps every return to its group of equal values.
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    last_position = np.cumsum(counts)
    average_rank = last_position - (counts - 1) / 2.0
    ranks = average_rank[inverse.reshape(-1)]
    return (ranks - 1.0) / (n - 1) - 0.5


def natural_gradient_estimate(
    samples: Sequence[ConnectivitySample],
    shaped: Sequence[float],
    rho: ProbVector,
) -> NaturalGradient:
    """
    Estimate the Bernoulli natural gradient from one population.

    Works with any per-member weights; pass raw returns instead of shaped
    ones to get the unbiased estimator of E[R (theta - rho)].
    """
    weights = np.asarray(shaped, dtype=np.float64).reshape(-1)
    if len(samples) != weights.size:
        raise ShapeMismatchError(
            f"{len(samples)} samples but {weights.size} returns"
        )
    thetas = stack_bits(samples)
    if thetas.shape[1] != rho.dim:
        raise ShapeMismatchError(f"samples have dimension {thetas.shape[1]}, expected {rho.dim}")
    return natural_gradient_from_bits(thetas, weights, rho)


def natural_gradient_from_bits(
    thetas: np.ndarray,
    weights: np.ndarray,
    rho: ProbVector,
) -> NaturalGradient:
    """Same estimate from an (N, d) bit matrix."""
    n = weights.size
    centered = thetas - rho.probs
    # Row-major reduction over members in index order.
    g = (weights[:, None] * centered).sum(axis=0) / n
    return NaturalGradient.from_vector(g, pop_size=n)
