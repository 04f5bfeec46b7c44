"""
Environments
============

Desk-scale episodic tasks behind one reset/step interface.

Features:
- pattern_match: one-step task scored by -Hamming(theta, target), closed-form oracle
- pointmass_reach: 2-D double integrator steering to a seeded goal
- pole_balance: cart-pole with continuous force, semi-implicit Euler at 0.02 s
- make_env(): construct an environment by config name

All environments are deterministic functions of (seed, action sequence) and
return undiscounted rewards. Stepping a finished episode raises
EpisodeDoneError until the next reset.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from itertools import product
from typing import Callable, Dict, NamedTuple, Optional, Sequence

import numpy as np

from .bernoulli_dist import ProbVector, ShapeMismatchError

logger = logging.getLogger(__name__)

EXHAUSTIVE_MAX_DIM = 20


class EpisodeDoneError(RuntimeError):
    """step() called after the episode ended."""
    pass


class StepResult(NamedTuple):
    obs: np.ndarray
    reward: float
    done: bool


class Environment(ABC):
    """Episodic task: reset(seed) -> obs, step(action) -> (obs, reward, done)."""

    obs_dim: int
    act_dim: int
    horizon: int
    # Documented per-step |reward| bound.
    reward_bound: float

    def __init__(self) -> None:
        self._done = True
        self._t = 0

    def reset(self, seed: int) -> np.ndarray:
        self._done = False
        self._t = 0
        return self._reset(int(seed))

    def step(self, action: Sequence[float]) -> StepResult:
        if self._done:
            raise EpisodeDoneError(f"{type(self).__name__}: step() after done; call reset()")
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.size != self.act_dim:
            raise ShapeMismatchError(f"action has {a.size} entries, expected {self.act_dim}")
        obs, reward, terminal = self._step(a)
        self._t += 1
        self._done = terminal or self._t >= self.horizon
        return StepResult(obs, float(reward), self._done)

    @property
    def t(self) -> int:
        return self._t

    @abstractmethod
    def _reset(self, seed: int) -> np.ndarray:
        ...

    @abstractmethod
    def _step(self, action: np.ndarray) -> tuple:
        ...


# ---------- pattern_match ----------

class PatternMatchEnv(Environment):
    """
    One-step episode: return = -Hamming(bits, target).

    As a policy task the action is thresholded at 0 to bits. In direct mode
    (`score_bits`) the sampled connectivity itself is scored.
    """
    horizon = 1

    def __init__(self, target: Sequence[int]):
        super().__init__()
        t = np.asarray(target, dtype=np.uint8).reshape(-1)
        if t.size == 0 or not np.all(t <= 1):
            raise ValueError("target must be a non-empty 0/1 vector")
        self.target = t
        self.obs_dim = 1
        self.act_dim = int(t.size)
        self.reward_bound = float(t.size)

    @property
    def dim(self) -> int:
        return self.act_dim

    def _reset(self, seed: int) -> np.ndarray:
        return np.ones(1)

    def _step(self, action: np.ndarray):
        bits = (action > 0.0).astype(np.uint8)
        return np.ones(1), self.score_bits(bits), True

    def score_bits(self, bits: np.ndarray) -> float:
        b = np.asarray(bits).reshape(-1)
        if b.size != self.dim:
            raise ShapeMismatchError(f"bits have {b.size} entries, expected {self.dim}")
        return -float(np.count_nonzero(b != self.target))

    def expected_return(self, rho: ProbVector) -> float:
        """Closed form: -sum_i P(theta_i != target_i)."""
        p = rho.probs
        return -float(np.sum(np.where(self.target == 1, 1.0 - p, p)))

    def enumerate_outcomes(self, rho: ProbVector):
        """Yield (theta, probability, return) over all 2^d outcomes."""
        if self.dim > EXHAUSTIVE_MAX_DIM:
            raise ValueError(f"exhaustive enumeration limited to d <= {EXHAUSTIVE_MAX_DIM}")
        p = rho.probs
        for combo in product((0, 1), repeat=self.dim):
            theta = np.array(combo, dtype=np.uint8)
            prob = float(np.prod(np.where(theta == 1, p, 1.0 - p)))
            yield theta, prob, self.score_bits(theta)

    def exact_natural_gradient(self, rho: ProbVector) -> np.ndarray:
        """E[R (theta - rho)] by enumeration (raw returns)."""
        g = np.zeros(self.dim)
        for theta, prob, ret in self.enumerate_outcomes(rho):
            g += prob * ret * (theta - rho.probs)
        return g

    def closed_form_natural_gradient(self, rho: ProbVector) -> np.ndarray:
        """rho (1 - rho) * (+1 where target is 1, -1 where 0)."""
        return rho.variance() * np.where(self.target == 1, 1.0, -1.0)


def pattern_match_env(d: int, target: Optional[Sequence[int]] = None,
                      seed: int = 0) -> PatternMatchEnv:
    """Pattern-match task of dimension d; a missing target is drawn from `seed`."""
    if target is None:
        target = np.random.default_rng(seed).integers(0, 2, size=d)
    env = PatternMatchEnv(target)
    if env.dim != d:
        raise ShapeMismatchError(f"target has {env.dim} bits, expected {d}")
    return env


# ---------- pointmass_reach ----------

class PointMassReachEnv(Environment):
    """
    2-D double integrator.

    obs = (position - goal, velocity); action = acceleration clipped to [-1, 1];
    reward = -||position - goal|| - 0.01 ||action||^2. The seed places the
    goal on a circle of radius `goal_distance` around the origin start.
    """
    obs_dim = 4
    act_dim = 2

    def __init__(self, horizon: int = 200, dt: float = 0.1, goal_distance: float = 1.0,
                 goal: Optional[Sequence[float]] = None):
        super().__init__()
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.horizon = horizon
        self.dt = dt
        self.goal_distance = goal_distance
        self.fixed_goal = None if goal is None else np.asarray(goal, dtype=np.float64)
        # Position stays within reach of |a| <= 1 over the horizon.
        reach = 0.5 * (horizon * dt) ** 2 * math.sqrt(2.0)
        self.reward_bound = goal_distance + reach + 0.02
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.goal = np.zeros(2)

    def _reset(self, seed: int) -> np.ndarray:
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        if self.fixed_goal is not None:
            self.goal = self.fixed_goal.copy()
        else:
            angle = np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi)
            self.goal = self.goal_distance * np.array([math.cos(angle), math.sin(angle)])
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.pos - self.goal, self.vel])

    def _step(self, action: np.ndarray):
        a = np.clip(action, -1.0, 1.0)
        reward = -float(np.linalg.norm(self.pos - self.goal)) - 0.01 * float(a @ a)
        self.vel = self.vel + a * self.dt
        self.pos = self.pos + self.vel * self.dt
        return self._obs(), reward, False


def pointmass_reach_env(horizon: int = 200, **kwargs) -> PointMassReachEnv:
    return PointMassReachEnv(horizon=horizon, **kwargs)


# ---------- pole_balance ----------

class PoleBalanceEnv(Environment):
    """
    Cart-pole with continuous force.

    action[0] in [-1, 1] scales force_mag; +1 reward for every step that ends
    upright; the episode ends when |angle| > 12 deg or |x| > 2.4.
    """
    obs_dim = 4
    act_dim = 1
    reward_bound = 1.0

    gravity = 9.8
    mass_cart = 1.0
    mass_pole = 0.1
    half_length = 0.5
    force_mag = 10.0
    tau = 0.02
    angle_limit = 12.0 * 2.0 * math.pi / 360.0
    x_limit = 2.4

    def __init__(self, horizon: int = 1000, init_noise: float = 0.05,
                 init_state: Optional[Sequence[float]] = None):
        super().__init__()
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.horizon = horizon
        self.init_noise = init_noise
        self.init_state = None if init_state is None else np.asarray(init_state, dtype=np.float64)
        self.state = np.zeros(4)

    def _reset(self, seed: int) -> np.ndarray:
        if self.init_state is not None:
            self.state = self.init_state.copy()
        else:
            rng = np.random.default_rng(seed)
            self.state = rng.uniform(-self.init_noise, self.init_noise, size=4)
        return self.state.copy()

    def _step(self, action: np.ndarray):
        x, x_dot, theta, theta_dot = self.state
        force = self.force_mag * float(np.clip(action[0], -1.0, 1.0))
        total_mass = self.mass_cart + self.mass_pole
        pole_ml = self.mass_pole * self.half_length

        cos_t, sin_t = math.cos(theta), math.sin(theta)
        temp = (force + pole_ml * theta_dot * theta_dot * sin_t) / total_mass
        theta_acc = (self.gravity * sin_t - cos_t * temp) / (
            self.half_length * (4.0 / 3.0 - self.mass_pole * cos_t * cos_t / total_mass)
        )
        x_acc = temp - pole_ml * theta_acc * cos_t / total_mass

        # semi-implicit Euler: velocities first, positions from new velocities
        x_dot = x_dot + self.tau * x_acc
        x = x + self.tau * x_dot
        theta_dot = theta_dot + self.tau * theta_acc
        theta = theta + self.tau * theta_dot
        self.state = np.array([x, x_dot, theta, theta_dot])

        fallen = abs(x) > self.x_limit or abs(theta) > self.angle_limit
        return self.state.copy(), 0.0 if fallen else 1.0, fallen


def pole_balance_env(horizon: int = 1000, **kwargs) -> PoleBalanceEnv:
    return PoleBalanceEnv(horizon=horizon, **kwargs)


# ---------- Registry ----------

ENV_FACTORIES: Dict[str, Callable[..., Environment]] = {
    "pattern_match": pattern_match_env,
    "pointmass_reach": pointmass_reach_env,
    "pole_balance": pole_balance_env,
}


def make_env(name: str, **params) -> Environment:
    """Build an environment by name with keyword parameters."""
    if name not in ENV_FACTORIES:
        raise ValueError(f"unknown environment '{name}', expected one of {sorted(ENV_FACTORIES)}")
    return ENV_FACTORIES[name](**params)
