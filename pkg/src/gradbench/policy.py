"""Actor and critic networks on top of :class:`~gradbench.nnet.DenseNet`.

Actors expose ``act`` (sample + log-prob), ``evaluate`` (log-prob + entropy of
given actions, caching what ``backward`` needs) and ``backward`` (parameter
gradients of ``sum(g_logp * logp + g_ent * entropy)``).
"""

from __future__ import annotations

import math

import numpy as np

from .envs import Box, Discrete
from .nnet import DenseNet

SQRT2 = math.sqrt(2.0)
LOG_2PI = math.log(2.0 * math.pi)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class CategoricalPolicy:
    def __init__(self, obs_dim: int, n_actions: int, rng: np.random.Generator, hidden=(64, 64)):
        gains = [SQRT2] * len(hidden) + [0.01]
        self.net = DenseNet([obs_dim, *hidden, n_actions], gains=gains, rng=rng)
        self.n_actions = n_actions
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params

    def probs(self, obs) -> np.ndarray:
        return np.exp(log_softmax(self.net(obs)))

    def act(self, obs, rng: np.random.Generator):
        logp_all = log_softmax(self.net(obs))
        cdf = np.cumsum(np.exp(logp_all), axis=1)
        u = rng.random((cdf.shape[0], 1)) * cdf[:, -1:]
        actions = np.minimum((u >= cdf).sum(axis=1), self.n_actions - 1)
        return actions, logp_all[np.arange(len(actions)), actions]

    def evaluate(self, obs, actions):
        actions = np.asarray(actions, dtype=np.int64)
        logp_all = log_softmax(self.net(obs))
        p = np.exp(logp_all)
        idx = np.arange(len(actions))
        logp = logp_all[idx, actions]
        entropy = -(p * logp_all).sum(axis=1)
        self._cache = (p, logp_all, entropy, idx, actions)
        return logp, entropy

    def backward(self, g_logp, g_ent=None):
        p, logp_all, entropy, idx, actions = self._cache
        g_logp = np.asarray(g_logp, dtype=np.float64)
        # d logp_a / dz = onehot(a) - p
        g = -p * g_logp[:, None]
        g[idx, actions] += g_logp
        if g_ent is not None:
            # d H / dz_k = -p_k (log p_k + H)
            g -= np.asarray(g_ent)[:, None] * p * (logp_all + entropy[:, None])
        grads, _ = self.net.backward(g)
        return grads


class GaussianPolicy:
    """Diagonal Gaussian with a state-independent log-std vector (initialised to 0)."""

    def __init__(self, obs_dim: int, action_dim: int, rng: np.random.Generator, hidden=(64, 64)):
        gains = [SQRT2] * len(hidden) + [0.01]
        self.net = DenseNet([obs_dim, *hidden, action_dim], gains=gains, rng=rng)
        self.log_std = np.zeros(action_dim)
        self.action_dim = action_dim
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params + [self.log_std]

    def act(self, obs, rng: np.random.Generator):
        mean = self.net(obs)
        std = np.exp(self.log_std)
        eps = rng.standard_normal(mean.shape)
        actions = mean + std * eps
        logp = (-0.5 * eps**2 - self.log_std - 0.5 * LOG_2PI).sum(axis=1)
        return actions, logp

    def evaluate(self, obs, actions):
        actions = np.asarray(actions, dtype=np.float64).reshape(-1, self.action_dim)
        mean = self.net(obs)
        var = np.exp(2.0 * self.log_std)
        diff = actions - mean
        logp = (-0.5 * diff**2 / var - self.log_std - 0.5 * LOG_2PI).sum(axis=1)
        ent_value = float(np.sum(self.log_std + 0.5 * (LOG_2PI + 1.0)))
        entropy = np.full(len(actions), ent_value)
        self._cache = (diff, var)
        return logp, entropy

    def backward(self, g_logp, g_ent=None):
        diff, var = self._cache
        g_logp = np.asarray(g_logp, dtype=np.float64)
        g_mean = g_logp[:, None] * diff / var
        grads, _ = self.net.backward(g_mean)
        g_logstd = (g_logp[:, None] * (diff**2 / var - 1.0)).sum(axis=0)
        if g_ent is not None:
            g_logstd = g_logstd + float(np.sum(g_ent))
        return grads + [g_logstd]


class ValueNet:
    def __init__(self, obs_dim: int, rng: np.random.Generator, hidden=(64, 64)):
        gains = [SQRT2] * len(hidden) + [1.0]
        self.net = DenseNet([obs_dim, *hidden, 1], gains=gains, rng=rng)

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params

    def value(self, obs) -> np.ndarray:
        return self.net(obs)[:, 0]

    __call__ = value

    def backward(self, g_value):
        grads, _ = self.net.backward(np.asarray(g_value, dtype=np.float64)[:, None])
        return grads


def make_policy(obs_dim: int, action_space, rng: np.random.Generator, hidden=(64, 64)):
    if isinstance(action_space, Discrete):
        return CategoricalPolicy(obs_dim, action_space.count, rng, hidden)
    if isinstance(action_space, Box):
        return GaussianPolicy(obs_dim, action_space.dim, rng, hidden)
    raise TypeError(f"unsupported action space {action_space!r}")
