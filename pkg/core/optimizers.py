"""
Optimizers
==========

Update rules mapping a population gradient estimate to a parameter step.

Features:
- SATR-EC: delta = eta * sqrt(rho (1 - rho)) * g, local KL = (eta^2 / 2) ||g||^2
- EC: delta = eta * g (KL grows without bound near the boundary)
- EC+TR: fixed KL budget delta_total = c * d with the active-constraint step
- ES: OpenAI-style Gaussian perturbation update with weight decay
- apply_update: rho + delta followed by the numerical clamp

Every Bernoulli rule returns a zero step for a zero-energy generation.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .bernoulli_dist import ProbVector, ShapeMismatchError, clamp, fisher_diag
from .fitness_shaping import NaturalGradient

logger = logging.getLogger(__name__)


# ---------- Configs ----------

class SatrConfig(BaseModel):
    """SATR step size; eta = sqrt(2 delta) for a per-unit-energy KL budget delta."""
    model_config = ConfigDict(extra="forbid", frozen=True)
    eta: float = Field(default=0.15, gt=0.0)

    @property
    def kl_per_energy(self) -> float:
        return self.eta * self.eta / 2.0


class EcConfig(BaseModel):
    """Baseline EC step size."""
    model_config = ConfigDict(extra="forbid", frozen=True)
    eta: float = Field(default=0.15, gt=0.0)


class TrConfig(BaseModel):
    """Fixed KL budget delta_total = delta_per_param * d."""
    model_config = ConfigDict(extra="forbid", frozen=True)
    delta_per_param: float = Field(default=1e-4, gt=0.0)
    # Denominator sqrt(g' F^-1 g) instead of the derivation-consistent sqrt(g' F g).
    main_text_form: bool = False

    def budget(self, dim: int) -> float:
        return self.delta_per_param * dim


class EsConfig(BaseModel):
    """Gaussian ES hyperparameters."""
    model_config = ConfigDict(extra="forbid", frozen=True)
    eta: float = Field(default=0.15, gt=0.0)
    sigma: float = Field(default=0.3, gt=0.0)
    weight_decay: float = Field(default=0.1, ge=0.0)
    mirrored: bool = True
    init_std: float = Field(default=0.1, ge=0.0)


# ---------- Bernoulli update rules ----------

def satr_step(rho: ProbVector, grad: NaturalGradient, cfg: SatrConfig) -> np.ndarray:
    """Signal-adaptive step eta * sqrt(rho (1 - rho)) * g."""
    _check(rho, grad)
    return cfg.eta * np.sqrt(rho.variance()) * grad.g


def ec_step(rho: ProbVector, grad: NaturalGradient, eta: float) -> np.ndarray:
    """Plain natural-gradient step eta * g."""
    _check(rho, grad)
    return eta * grad.g


def ec_tr_step(rho: ProbVector, grad: NaturalGradient, cfg: TrConfig) -> np.ndarray:
    """
    Normalized step saturating the quadratic KL budget.

    With F = diag(1 / (rho (1 - rho))) the step is
    sqrt(2 delta_total) * g / sqrt(g' F g), so (1/2) delta' F delta = delta_total.
    `main_text_form` swaps the denominator for sqrt(g' F^-1 g); that variant
    does not saturate the budget.
    """
    _check(rho, grad)
    if not grad.has_signal:
        logger.warning("no-signal generation: zero-energy gradient, EC+TR step is zero")
        return np.zeros(rho.dim)

    g = grad.g
    metric = rho.variance() if cfg.main_text_form else fisher_diag(rho)
    norm = np.sqrt(np.sum(g * metric * g))
    return np.sqrt(2.0 * cfg.budget(rho.dim)) * g / norm


def apply_update(rho: ProbVector, delta: np.ndarray) -> ProbVector:
    """rho + delta, clamped to [eps, 1 - eps]."""
    delta = np.asarray(delta, dtype=np.float64).reshape(-1)
    if delta.size != rho.dim:
        raise ShapeMismatchError(f"delta has dimension {delta.size}, expected {rho.dim}")
    return clamp(rho.probs + delta, rho.clamp_eps)


# ---------- Gaussian ES ----------

def es_perturbations(
    generator: np.random.Generator,
    pop_size: int,
    dim: int,
    cfg: EsConfig,
) -> np.ndarray:
    """
    Draw (N, m) perturbations eps_n ~ Normal(0, sigma^2 I).

    With mirrored sampling member 2k+1 reuses -eps_{2k}; an odd last member
    keeps an unpaired draw.
    """
    if not cfg.mirrored:
        return cfg.sigma * generator.standard_normal((pop_size, dim))
    half = (pop_size + 1) // 2
    base = cfg.sigma * generator.standard_normal((half, dim))
    out = np.empty((pop_size, dim), dtype=np.float64)
    out[0::2] = base[: (pop_size + 1) // 2]
    out[1::2] = -base[: pop_size // 2]
    return out


def es_step(
    weights: np.ndarray,
    perturbations: np.ndarray,
    shaped: Sequence[float],
    cfg: EsConfig,
) -> np.ndarray:
    """w + (eta / (N sigma)) sum_n shaped_n eps_n - eta * weight_decay * w."""
    w = np.asarray(weights, dtype=np.float64)
    eps = np.asarray(perturbations, dtype=np.float64)
    f = np.asarray(shaped, dtype=np.float64).reshape(-1)
    if eps.shape != (f.size, w.size):
        raise ShapeMismatchError(
            f"perturbations have shape {eps.shape}, expected ({f.size}, {w.size})"
        )
    direction = (f[:, None] * eps).sum(axis=0)
    return w + cfg.eta / (f.size * cfg.sigma) * direction - cfg.eta * cfg.weight_decay * w


# ---------- Dispatch ----------

BernoulliRule = Callable[[ProbVector, NaturalGradient], np.ndarray]

OPTIMIZER_NAMES = ("satr", "ec", "ec_tr", "es")


def bernoulli_rule(
    name: str,
    satr: SatrConfig,
    ec: EcConfig,
    tr: TrConfig,
) -> BernoulliRule:
    """Bind the configured update rule for a Bernoulli optimizer name."""
    rules: Dict[str, BernoulliRule] = {
        "satr": lambda rho, grad: satr_step(rho, grad, satr),
        "ec": lambda rho, grad: ec_step(rho, grad, ec.eta),
        "ec_tr": lambda rho, grad: ec_tr_step(rho, grad, tr),
    }
    if name not in rules:
        raise ValueError(f"'{name}' is not a Bernoulli optimizer; expected one of {sorted(rules)}")
    return rules[name]


def _check(rho: ProbVector, grad: NaturalGradient) -> None:
    if grad.g.size != rho.dim:
        raise ShapeMismatchError(f"gradient has dimension {grad.g.size}, expected {rho.dim}")
