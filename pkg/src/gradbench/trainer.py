"""Rollout collection, advantage dispatch and the shared clipped policy update.

Every algorithm variant runs through the same loop::

    collect -> compute_advantages -> ppo_update

and differs only in its :class:`~gradbench.advantage.AdvantageConfig` and
whether a critic is trained.  Critic-free variants collect one complete
episode per env per iteration (``n_steps="episode"``); the group is then the
``n_envs`` episodes of the batch.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs as envs_mod
from .advantage import (
    AdvantageConfig,
    ConfigError,
    EmaState,
    Mode,
    apply_baseline,
    episodic_return,
    gae,
)
from .envs import Box, VecEnv
from .nnet import Adam, clip_global_norm
from .policy import ValueNet, make_policy

log = logging.getLogger(__name__)

EPISODE = "episode"

# algo name -> (advantage mode, default rollout horizon, default gamma)
ALGOS = {
    "ppo": (Mode.LEARNED_CRITIC_GAE, 128, 0.99),
    "grpo": (Mode.GROUP_RELATIVE, EPISODE, 1.0),
    "reinforce-clip": (Mode.NO_BASELINE, EPISODE, 1.0),
    "ppo-gaussian-baseline": (Mode.RANDOM_GAUSSIAN, EPISODE, 1.0),
    "ppo-ema": (Mode.EMA, EPISODE, 1.0),
    "ppo-batchmean": (Mode.BATCH_MEAN, EPISODE, 1.0),
    "grpo-batch": (Mode.BATCH_MEAN_SCALED, EPISODE, 1.0),
}

CONTINUOUS_ENVS = {"mountaincar-continuous-v0"}


class NonFiniteLossError(FloatingPointError):
    """The update produced a NaN/inf loss; the run is aborted."""


def parse_n_steps(value) -> int | str:
    """Accept ``128``, ``"fixed:128"``, ``"128"`` or ``"episode"``."""
    if isinstance(value, (int, np.integer)):
        return int(value)
    text = str(value).strip().lower()
    if text in (EPISODE, "h", "full"):
        return EPISODE
    if text.startswith("fixed:"):
        text = text[len("fixed:"):]
    try:
        k = int(text)
    except ValueError:
        raise ConfigError(f"n_steps must be 'fixed:K' or 'episode', got {value!r}") from None
    if k <= 0:
        raise ConfigError("fixed rollout length must be positive")
    return k


@dataclass
class TrainConfig:
    """Full hyperparameter record.  ``None`` fields are filled by :meth:`resolved`."""

    env_id: str = "cartpole-v1"
    algo: str = "ppo"
    seed: int = 0
    total_steps: int = 1_000_000
    n_envs: int = 8
    n_steps: int | str | None = None
    gamma: float | None = None
    lam: float = 0.95
    group_size: int | None = None
    n_epochs: int = 4
    n_minibatches: int = 1
    clip_epsilon: float = 0.2
    learning_rate: float = 2.5e-4
    anneal_lr: bool = False
    value_coef: float = 0.5
    clip_value_loss: bool = True
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    norm_adv: bool | None = None
    truncation_bootstrap: bool | None = None
    normalize_obs: bool | None = None
    normalize_reward: bool | None = None
    norm_epsilon: float = 1e-8
    ema_decay: float = 0.9
    rg_per_batch: bool = False
    hidden: tuple[int, ...] = (64, 64)

    @property
    def mode(self) -> Mode:
        try:
            return ALGOS[self.algo][0]
        except KeyError:
            raise ConfigError(f"unknown algo {self.algo!r}; choose from {sorted(ALGOS)}") from None

    @property
    def uses_critic(self) -> bool:
        return self.mode.uses_critic

    def resolved(self) -> "TrainConfig":
        """Copy with algo/env defaults filled in; raises ConfigError on invalid combinations."""
        mode, default_steps, default_gamma = ALGOS.get(self.algo, (None, None, None))
        if mode is None:
            raise ConfigError(f"unknown algo {self.algo!r}; choose from {sorted(ALGOS)}")
        if self.env_id not in envs_mod.ENVS:
            raise ConfigError(f"unknown env {self.env_id!r}; choose from {sorted(envs_mod.ENVS)}")
        c = dataclasses.replace(self)
        c.n_steps = parse_n_steps(default_steps if c.n_steps is None else c.n_steps)
        c.gamma = default_gamma if c.gamma is None else float(c.gamma)
        c.hidden = tuple(int(h) for h in c.hidden)
        critic = mode.uses_critic
        if c.norm_adv is None:
            c.norm_adv = critic
        if c.truncation_bootstrap is None:
            c.truncation_bootstrap = critic
        continuous = c.env_id in CONTINUOUS_ENVS
        if c.normalize_obs is None:
            c.normalize_obs = continuous
        if c.normalize_reward is None:
            c.normalize_reward = continuous
        if mode is Mode.GROUP_RELATIVE:
            if c.group_size is None:
                c.group_size = c.n_envs
        else:
            c.group_size = None
        c._validate()
        return c

    def _validate(self):
        critic = self.uses_critic
        if self.total_steps <= 0:
            raise ConfigError("total_steps must be positive")
        if self.n_envs <= 0 or self.n_epochs <= 0 or self.n_minibatches <= 0:
            raise ConfigError("n_envs, n_epochs and n_minibatches must be positive")
        if not critic and self.n_steps != EPISODE:
            raise ConfigError(
                f"algo {self.algo!r} uses episodic returns and needs complete episodes: "
                "use n_steps='episode', not a fixed rollout length"
            )
        if not critic and self.truncation_bootstrap:
            raise ConfigError("truncation_bootstrap requires a critic")
        if self.n_steps != EPISODE and self.n_minibatches > 1:
            if (self.n_steps * self.n_envs) % self.n_minibatches:
                raise ConfigError("n_minibatches must divide n_envs * n_steps")
        if self.group_size is not None:
            if self.group_size < 2 or self.n_envs % self.group_size:
                raise ConfigError(
                    f"group_size {self.group_size} must be >= 2 and divide n_envs {self.n_envs}"
                )
        if self.clip_epsilon <= 0 or self.max_grad_norm <= 0 or self.learning_rate <= 0:
            raise ConfigError("clip_epsilon, max_grad_norm and learning_rate must be positive")
        self.advantage_config()

    def advantage_config(self) -> AdvantageConfig:
        return AdvantageConfig(
            mode=self.mode,
            gamma=self.gamma if self.gamma is not None else ALGOS[self.algo][2],
            lam=self.lam,
            group_size=self.group_size,
            norm_epsilon=self.norm_epsilon,
            ema_decay=self.ema_decay,
            rg_per_batch=self.rg_per_batch,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "hidden" in data:
            data["hidden"] = tuple(data["hidden"])
        return cls(**data)


class RunningMeanStd:
    """Streaming mean/variance (parallel-update form), as used for obs/reward scaling."""

    def __init__(self, shape=(), epsilon=1e-4):
        self.mean = np.zeros(shape)
        self.var = np.ones(shape)
        self.count = epsilon

    def update(self, x):
        x = np.asarray(x, dtype=np.float64)
        if len(x) == 0:
            return
        b_mean, b_var, b_count = x.mean(axis=0), x.var(axis=0), x.shape[0]
        delta = b_mean - self.mean
        tot = self.count + b_count
        self.mean = self.mean + delta * b_count / tot
        m2 = self.var * self.count + b_var * b_count + delta**2 * self.count * b_count / tot
        self.var = m2 / tot
        self.count = tot


class Normalizer:
    """Observation and reward scaling applied between the envs and the learner."""

    CLIP = 10.0
    EPS = 1e-8
    REWARD_DISCOUNT = 0.99

    def __init__(self, obs_dim: int, n_envs: int, obs: bool, reward: bool):
        self.obs_on = obs
        self.reward_on = reward
        self.obs_rms = RunningMeanStd((obs_dim,))
        self.ret_rms = RunningMeanStd(())
        self.running_return = np.zeros(n_envs)

    def observe(self, obs, update_rows=None):
        if not self.obs_on:
            return obs
        if update_rows is None:
            self.obs_rms.update(obs)
        else:
            self.obs_rms.update(obs[update_rows])
        return self.scale_obs(obs)

    def scale_obs(self, obs):
        if not self.obs_on:
            return obs
        z = (obs - self.obs_rms.mean) / np.sqrt(self.obs_rms.var + self.EPS)
        return np.clip(z, -self.CLIP, self.CLIP)

    def reward(self, rewards, dones, active):
        if not self.reward_on:
            return rewards
        self.running_return[active] = self.running_return[active] * self.REWARD_DISCOUNT + rewards[active]
        self.ret_rms.update(self.running_return[active])
        self.running_return[dones] = 0.0
        scaled = rewards / np.sqrt(self.ret_rms.var + self.EPS)
        return np.clip(scaled, -self.CLIP, self.CLIP)


@dataclass
class RolloutBatch:
    """Time-major rollout arrays of shape ``(T, n_envs, ...)``.

    ``rewards`` are what the learner sees (possibly scaled); ``raw_rewards``
    are the environment's.  ``bootstrap[t, i]`` is V(final obs) on truncated
    steps when truncation bootstrapping is on, else 0.
    """

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    raw_rewards: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    mask: np.ndarray
    values: np.ndarray | None = None
    bootstrap: np.ndarray | None = None
    next_value: np.ndarray | None = None
    episodes: list = field(default_factory=list)
    episode_steps: list = field(default_factory=list)

    @property
    def n_valid(self) -> int:
        return int(self.mask.sum())

    @property
    def dones(self) -> np.ndarray:
        return self.terminated | self.truncated


class Agent:
    """Actor, optional critic and their shared Adam optimiser."""

    def __init__(self, obs_dim: int, action_space, critic: bool, rng, lr: float, hidden=(64, 64)):
        self.actor = make_policy(obs_dim, action_space, rng, hidden)
        self.critic = ValueNet(obs_dim, rng, hidden) if critic else None
        self.optimizer = Adam(self.params, lr=lr)

    @property
    def params(self) -> list[np.ndarray]:
        return self.actor.params + (self.critic.params if self.critic else [])


class Collector:
    """Owns the vectorised envs and the rolling observation between iterations."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.vec = VecEnv(config.env_id, config.n_envs, seed=config.seed)
        self.norm = Normalizer(self.vec.observation_dim, config.n_envs,
                               config.normalize_obs, config.normalize_reward)
        self.next_obs = self.norm.observe(self.vec.reset())
        self.global_step = 0

    def collect(self, agent: Agent, rng: np.random.Generator) -> RolloutBatch:
        if self.config.n_steps == EPISODE:
            return self._collect_episodes(agent, rng)
        return self._collect_fixed(agent, rng, self.config.n_steps)

    def _bootstrap_values(self, agent, episodes, boot_row):
        if agent.critic is None or not self.config.truncation_bootstrap:
            return
        trunc = [ep for ep in episodes if ep.truncated]
        if trunc:
            final = self.norm.scale_obs(np.stack([ep.final_observation for ep in trunc]))
            v = agent.critic(final)
            for ep, val in zip(trunc, v):
                boot_row[ep.env_index] = val

    def _collect_fixed(self, agent, rng, n_steps) -> RolloutBatch:
        n = self.vec.n_envs
        d = self.vec.observation_dim
        space = self.vec.action_space
        continuous = isinstance(space, Box)
        obs = np.zeros((n_steps, n, d))
        actions = np.zeros((n_steps, n, space.dim)) if continuous else np.zeros((n_steps, n), dtype=np.int64)
        logp = np.zeros((n_steps, n))
        rewards = np.zeros((n_steps, n))
        raw = np.zeros((n_steps, n))
        term = np.zeros((n_steps, n), dtype=bool)
        trunc = np.zeros((n_steps, n), dtype=bool)
        critic = agent.critic is not None
        values = np.zeros((n_steps, n)) if critic else None
        boot = np.zeros((n_steps, n))
        episodes, ep_steps = [], []
        all_active = np.ones(n, dtype=bool)
        for t in range(n_steps):
            obs[t] = self.next_obs
            a, lp = agent.actor.act(self.next_obs, rng)
            if critic:
                values[t] = agent.critic(self.next_obs)
            actions[t], logp[t] = a, lp
            res = self.vec.step(a)
            self.global_step += n
            raw[t], term[t], trunc[t] = res.rewards, res.terminated, res.truncated
            rewards[t] = self.norm.reward(res.rewards, term[t] | trunc[t], all_active)
            self.next_obs = self.norm.observe(res.observations)
            self._bootstrap_values(agent, res.episodes, boot[t])
            for ep in res.episodes:
                episodes.append(ep)
                ep_steps.append(self.global_step)
        next_value = agent.critic(self.next_obs) if critic else None
        return RolloutBatch(obs, actions, logp, rewards, raw, term, trunc,
                            np.ones((n_steps, n), dtype=bool), values, boot, next_value,
                            episodes, ep_steps)

    def _collect_episodes(self, agent, rng) -> RolloutBatch:
        n = self.vec.n_envs
        critic = agent.critic is not None
        active = np.ones(n, dtype=bool)
        rows = {k: [] for k in ("obs", "actions", "logp", "rewards", "raw", "term", "trunc", "mask", "values", "boot")}
        episodes, ep_steps = [], []
        while active.any():
            a, lp = agent.actor.act(self.next_obs, rng)
            if critic:
                rows["values"].append(np.where(active, agent.critic(self.next_obs), 0.0))
            mask = active.copy()
            obs_t = np.where(mask[:, None], self.next_obs, 0.0)
            res = self.vec.step(a, active=mask)
            self.global_step += int(mask.sum())
            dones = res.terminated | res.truncated
            rew = self.norm.reward(res.rewards, dones, mask)
            boot = np.zeros(n)
            self._bootstrap_values(agent, res.episodes, boot)
            new_obs = res.observations
            for ep in res.episodes:
                active[ep.env_index] = False
                episodes.append(ep)
                ep_steps.append(self.global_step)
            self.next_obs = self.norm.observe(new_obs, update_rows=active) if active.any() else self.norm.scale_obs(new_obs)
            rows["obs"].append(obs_t)
            rows["actions"].append(np.where(mask.reshape(-1, *([1] * (a.ndim - 1))), a, 0))
            rows["logp"].append(np.where(mask, lp, 0.0))
            rows["rewards"].append(np.where(mask, rew, 0.0))
            rows["raw"].append(res.rewards)
            # padded rows count as done so no credit leaks through them
            rows["term"].append(res.terminated | ~mask)
            rows["trunc"].append(res.truncated)
            rows["mask"].append(mask)
            rows["boot"].append(boot)
        st = {k: np.stack(v) for k, v in rows.items() if v}
        return RolloutBatch(st["obs"], st["actions"], st["logp"], st["rewards"], st["raw"],
                            st["term"], st["trunc"], st["mask"], st.get("values"), st["boot"],
                            np.zeros(n) if critic else None, episodes, ep_steps)


def episode_returns(batch: RolloutBatch, gamma: float) -> np.ndarray:
    """One from-start discounted return per env column (episode-complete batches)."""
    n = batch.mask.shape[1]
    return np.array([episodic_return(batch.rewards[batch.mask[:, i], i], gamma) for i in range(n)])


def compute_advantages(batch: RolloutBatch, config: TrainConfig, ema: EmaState | None = None,
                       rng: np.random.Generator | None = None):
    """Per-step advantages, plus value targets when a critic is used (else ``None``)."""
    adv_cfg = config.advantage_config()
    if adv_cfg.mode.uses_critic:
        if batch.values is None:
            raise ConfigError("critic mode needs recorded values")
        rewards = batch.rewards + adv_cfg.gamma * batch.bootstrap
        adv = gae(rewards, batch.values, batch.next_value, batch.dones, adv_cfg.gamma, adv_cfg.lam)
        adv = adv * batch.mask
        return adv, (adv + batch.values) * batch.mask
    if config.n_steps != EPISODE:
        raise ConfigError("critic-free advantages need episode-complete rollouts")
    per_episode = apply_baseline(adv_cfg, episode_returns(batch, adv_cfg.gamma), ema, rng)
    return per_episode[None, :] * batch.mask, None


def clipped_surrogate(ratio, adv, clip_epsilon: float):
    """Per-step ``min(r*A, clip(r)*A)`` and its derivative with respect to ``r``."""
    ratio = np.asarray(ratio, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    lo, hi = 1.0 - clip_epsilon, 1.0 + clip_epsilon
    objective = np.minimum(ratio * adv, np.clip(ratio, lo, hi) * adv)
    clipped = ((adv > 0) & (ratio > hi)) | ((adv < 0) & (ratio < lo))
    return objective, np.where(clipped, 0.0, adv)


@dataclass
class UpdateStats:
    policy_loss: list = field(default_factory=list)
    value_loss: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    ratio_mean: list = field(default_factory=list)
    clip_fraction: list = field(default_factory=list)
    approx_kl: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)

    def summary(self) -> dict:
        return {k: float(np.mean(v)) if v else float("nan") for k, v in dataclasses.asdict(self).items()}


def loss_and_grads(agent: Agent, obs, actions, logp_old, adv, returns, values_old, config: TrainConfig):
    """Loss on one minibatch of valid rows and gradients for ``agent.params`` (unclipped)."""
    m = len(obs)
    logp, ent = agent.actor.evaluate(obs, actions)
    logratio = logp - logp_old
    ratio = np.exp(logratio)
    objective, d_ratio = clipped_surrogate(ratio, adv, config.clip_epsilon)
    pg_loss = -objective.mean()
    ent_mean = float(ent.mean())
    g_ent = np.full(m, -config.entropy_coef / m) if config.entropy_coef else None
    grads = agent.actor.backward(-d_ratio * ratio / m, g_ent)
    v_loss = 0.0
    if agent.critic is not None:
        v = agent.critic(obs)
        unclipped = (v - returns) ** 2
        if config.clip_value_loss:
            eps = config.clip_epsilon
            v_clip = values_old + np.clip(v - values_old, -eps, eps)
            clipped = (v_clip - returns) ** 2
            use_unclipped = unclipped >= clipped
            v_loss = 0.5 * np.maximum(unclipped, clipped).mean()
            inside = np.abs(v - values_old) < eps
            g_v = np.where(use_unclipped, v - returns, np.where(inside, v_clip - returns, 0.0))
        else:
            v_loss = 0.5 * unclipped.mean()
            g_v = v - returns
        grads = grads + agent.critic.backward(config.value_coef * g_v / m)
    loss = pg_loss - config.entropy_coef * ent_mean + config.value_coef * v_loss
    info = {
        "loss": float(loss),
        "policy_loss": float(pg_loss),
        "value_loss": float(v_loss),
        "entropy": ent_mean,
        "ratio": ratio,
        "logratio": logratio,
    }
    return info, grads


def ppo_update(batch: RolloutBatch, advantages, returns, agent: Agent, config: TrainConfig,
               rng: np.random.Generator | None = None, lr: float | None = None) -> UpdateStats:
    """``n_epochs`` passes of clipped-surrogate Adam steps over the valid rows of ``batch``."""
    valid = batch.mask.reshape(-1)
    obs = batch.obs.reshape(-1, batch.obs.shape[-1])[valid]
    act_shape = batch.actions.shape[2:]
    actions = batch.actions.reshape(-1, *act_shape)[valid]
    logp_old = batch.logp.reshape(-1)[valid]
    adv = np.asarray(advantages).reshape(-1)[valid]
    ret = vals = None
    if agent.critic is not None:
        ret = np.asarray(returns).reshape(-1)[valid]
        vals = batch.values.reshape(-1)[valid]
    if config.norm_adv and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std(ddof=1) + 1e-8)
    n = len(obs)
    stats = UpdateStats()
    for _ in range(config.n_epochs):
        order = np.arange(n) if config.n_minibatches == 1 or rng is None else rng.permutation(n)
        for mb in np.array_split(order, config.n_minibatches):
            if len(mb) == 0:
                continue
            info, grads = loss_and_grads(
                agent, obs[mb], actions[mb], logp_old[mb], adv[mb],
                None if ret is None else ret[mb], None if vals is None else vals[mb], config,
            )
            if not math.isfinite(info["loss"]):
                raise NonFiniteLossError(
                    f"non-finite loss {info['loss']} (policy {info['policy_loss']}, "
                    f"value {info['value_loss']}) in {config.algo} on {config.env_id}, seed {config.seed}"
                )
            grads = clip_global_norm(grads, config.max_grad_norm)
            agent.optimizer.step(grads, lr)
            ratio, logratio = info["ratio"], info["logratio"]
            stats.policy_loss.append(info["policy_loss"])
            stats.value_loss.append(info["value_loss"])
            stats.entropy.append(info["entropy"])
            stats.ratio_mean.append(float(ratio.mean()))
            stats.clip_fraction.append(float(np.mean(np.abs(ratio - 1.0) > config.clip_epsilon)))
            stats.approx_kl.append(float(np.mean((ratio - 1.0) - logratio)))
    return stats


@dataclass
class RunLog:
    """Completed episodes of one run plus the env-step count at the end of each iteration."""

    global_steps: list = field(default_factory=list)
    returns: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    iteration_steps: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    HEADER = "global_step,episode_return,episode_length"

    def __len__(self):
        return len(self.returns)

    def append(self, global_step: int, episode_return: float, length: int):
        self.global_steps.append(int(global_step))
        self.returns.append(float(episode_return))
        self.lengths.append(int(length))

    def iterations(self) -> np.ndarray:
        """1-based update-iteration index during which each episode completed."""
        return np.searchsorted(np.asarray(self.iteration_steps), np.asarray(self.global_steps), side="left") + 1

    def to_text(self) -> str:
        lines = [self.HEADER]
        lines += [f"{s},{r!r},{n}" for s, r, n in zip(self.global_steps, self.returns, self.lengths)]
        return "\n".join(lines) + "\n"

    def write(self, path) -> tuple[Path, Path]:
        """Write ``<path>.runlog.csv`` and the ``<path>.meta.json`` sidecar."""
        log_path, meta_path = runlog_paths(path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        meta = dict(self.metadata)
        meta["iteration_steps"] = list(self.iteration_steps)
        # sidecar last: its presence marks the log as complete
        log_path.write_text(self.to_text())
        meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        return log_path, meta_path

    @classmethod
    def read(cls, path) -> "RunLog":
        log_path, meta_path = runlog_paths(path)
        run = cls()
        lines = log_path.read_text().splitlines()
        if not lines or lines[0] != cls.HEADER:
            raise ValueError(f"{log_path}: missing RunLog header")
        for line in lines[1:]:
            s, r, n = line.split(",")
            run.append(int(s), float(r), int(n))
        if meta_path.exists():
            run.metadata = json.loads(meta_path.read_text())
            run.iteration_steps = list(run.metadata.pop("iteration_steps", []))
        return run


def runlog_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    for suffix in (".runlog.csv", ".meta.json"):
        if p.name.endswith(suffix):
            p = p.with_name(p.name[: -len(suffix)])
    return p.with_name(p.name + ".runlog.csv"), p.with_name(p.name + ".meta.json")


def _streams(seed: int):
    init, act, baseline, shuffle = np.random.SeedSequence(seed).spawn(4)
    return (np.random.Generator(np.random.PCG64(s)) for s in (init, act, baseline, shuffle))


def train(config: TrainConfig, callback=None) -> RunLog:
    """Run collect/advantage/update iterations until ``total_steps`` env steps are consumed.

    ``callback(iteration, collector, stats)`` is invoked after each update if given.
    """
    cfg = config.resolved()
    init_rng, act_rng, baseline_rng, shuffle_rng = _streams(cfg.seed)
    collector = Collector(cfg)
    agent = Agent(collector.vec.observation_dim, collector.vec.action_space, cfg.uses_critic,
                  init_rng, cfg.learning_rate, cfg.hidden)
    ema = EmaState()
    run = RunLog(metadata={
        "config": cfg.to_dict(),
        "rng": "numpy PCG64; env i seeded with seed+i; learner streams from SeedSequence(seed).spawn(4)",
        "status": "running",
    })
    iteration = 0
    while collector.global_step < cfg.total_steps:
        lr = cfg.learning_rate
        if cfg.anneal_lr:
            lr *= 1.0 - collector.global_step / cfg.total_steps
        batch = collector.collect(agent, act_rng)
        for ep, step in zip(batch.episodes, batch.episode_steps):
            run.append(step, ep.episode_return, ep.length)
        adv, ret = compute_advantages(batch, cfg, ema, baseline_rng)
        stats = ppo_update(batch, adv, ret, agent, cfg, shuffle_rng, lr)
        iteration += 1
        run.iteration_steps.append(collector.global_step)
        if callback is not None:
            callback(iteration, collector, stats)
        if log.isEnabledFor(logging.DEBUG):
            recent = run.returns[-cfg.n_envs:]
            log.debug("iter %d step %d return %.1f %s", iteration, collector.global_step,
                      np.mean(recent) if recent else float("nan"), stats.summary())
    run.metadata.update(status="completed", iterations=iteration, global_steps=collector.global_step,
                        episodes=len(run))
    run.agent = agent
    return run
