"""Return and advantage estimators.

Step-wise arrays are laid out time-first: shape ``(T,)`` for a single stream
or ``(T, N)`` for ``N`` parallel streams.  ``episode_ends[t]`` / ``terminals[t]``
mark that the episode finished *at* step ``t`` (no credit flows from ``t + 1``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Invalid estimator or training configuration."""


class Mode(str, enum.Enum):
    LEARNED_CRITIC_GAE = "gae"
    NO_BASELINE = "none"
    RANDOM_GAUSSIAN = "random_gaussian"
    EMA = "ema"
    BATCH_MEAN = "batch_mean"
    BATCH_MEAN_SCALED = "batch_mean_scaled"
    GROUP_RELATIVE = "group_relative"

    @property
    def uses_critic(self) -> bool:
        return self is Mode.LEARNED_CRITIC_GAE


@dataclass
class AdvantageConfig:
    mode: Mode = Mode.LEARNED_CRITIC_GAE
    gamma: float = 0.99
    lam: float = 0.95
    group_size: int | None = None
    norm_epsilon: float = 1e-8
    ema_decay: float = 0.9
    rg_per_batch: bool = False

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")
        if self.norm_epsilon <= 0:
            raise ConfigError("norm_epsilon must be > 0")
        if self.group_size is not None and self.group_size < 2:
            raise ConfigError("group_size must be >= 2")


@dataclass
class EmaState:
    value: float = 0.0
    initialized: bool = False


@dataclass
class GroupStats:
    mu: float
    sigma: float


def discounted_returns(rewards, episode_ends, gamma: float) -> np.ndarray:
    """R_t = r_t + gamma * R_{t+1}, restarted after every episode end."""
    rewards = np.asarray(rewards, dtype=np.float64)
    ends = np.asarray(episode_ends, dtype=bool)
    out = np.zeros_like(rewards)
    running = np.zeros_like(rewards[0]) if rewards.ndim > 1 else 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running * (1.0 - ends[t])
        out[t] = running
    return out


def episodic_return(rewards, gamma: float = 1.0) -> float:
    """Discounted sum from the episode start, sum_t gamma^t r_t."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if gamma == 1.0:
        return float(rewards.sum())
    return float(np.dot(gamma ** np.arange(len(rewards)), rewards))


def gae(rewards, values, next_value, terminals, gamma: float, lam: float) -> np.ndarray:
    """Generalised advantage estimates via the backward recursion.

    ``values[t]`` is V(s_t); ``next_value`` is V of the state after the last
    step.  A terminal flag zeroes both the bootstrap and the carried advantage.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    nonterminal = 1.0 - np.asarray(terminals, dtype=np.float64)
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0]) if rewards.ndim > 1 else 0.0
    v_next = np.asarray(next_value, dtype=np.float64)
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * v_next * nonterminal[t] - values[t]
        last = delta + gamma * lam * nonterminal[t] * last
        adv[t] = last
        v_next = values[t]
    return adv


def group_stats(returns) -> GroupStats:
    r = np.asarray(returns, dtype=np.float64)
    return GroupStats(float(r.mean()), float(r.std()))


def group_normalize(returns, norm_epsilon: float = 1e-8) -> np.ndarray:
    """(R_i - mean) / (population std + eps) over one group."""
    r = np.asarray(returns, dtype=np.float64)
    if r.ndim != 1 or len(r) < 2:
        raise ConfigError("a group needs at least 2 returns")
    stats = group_stats(r)
    return (r - stats.mu) / (stats.sigma + norm_epsilon)


def group_relative(returns, group_size: int, norm_epsilon: float = 1e-8) -> np.ndarray:
    """Normalise consecutive blocks of ``group_size`` returns independently."""
    r = np.asarray(returns, dtype=np.float64)
    if group_size < 2 or len(r) % group_size:
        raise ConfigError(f"{len(r)} returns cannot be split into groups of {group_size}")
    return np.concatenate([group_normalize(g, norm_epsilon) for g in r.reshape(-1, group_size)])


def apply_baseline(config: AdvantageConfig, returns, ema: EmaState | None = None,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-episode advantages for the critic-free estimators.

    ``returns`` holds one (possibly discounted) return per completed episode.
    EMA mode reads the baseline, then folds in the batch mean.
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.size == 0:
        raise ValueError("apply_baseline needs at least one episode return")
    mode = config.mode
    if mode is Mode.NO_BASELINE:
        return r.copy()
    if mode is Mode.BATCH_MEAN:
        return r - r.mean()
    if mode is Mode.BATCH_MEAN_SCALED:
        return (r - r.mean()) / (r.std() + config.norm_epsilon)
    if mode is Mode.GROUP_RELATIVE:
        return group_relative(r, config.group_size or len(r), config.norm_epsilon)
    if mode is Mode.RANDOM_GAUSSIAN:
        if rng is None:
            raise ValueError("RandomGaussian baseline needs an rng")
        size = None if config.rg_per_batch else r.shape
        return r - rng.normal(r.mean(), r.std(), size=size)
    if mode is Mode.EMA:
        if ema is None:
            raise ValueError("EMA baseline needs an EmaState")
        batch_mean = float(r.mean())
        if not ema.initialized:
            ema.value = batch_mean
            ema.initialized = True
        adv = r - ema.value
        ema.value = config.ema_decay * ema.value + (1.0 - config.ema_decay) * batch_mean
        return adv
    raise ConfigError(f"{mode} is not a critic-free baseline")
