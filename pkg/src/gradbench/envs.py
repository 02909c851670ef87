"""Classic-control environments implemented natively in numpy/math.

Three tasks are provided, each a faithful port of the Gymnasium classic-control
reference dynamics (constants are listed in ``CONSTANTS`` and in the README):

* ``cartpole-v1`` -- Euler-integrated cart-pole, 2 discrete actions, +1 per step.
* ``acrobot-v1`` -- two-link pendulum integrated with RK4, 3 discrete torques.
* ``mountaincar-continuous-v0`` -- 1-D continuous force, sparse +100 goal bonus.

Every :class:`Env` owns a ``numpy.random.Generator`` (PCG64) that is only
consumed at reset; the dynamics themselves are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EnvError(RuntimeError):
    """Raised when an environment is used outside its contract."""


@dataclass(frozen=True)
class Discrete:
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("Discrete action space needs at least 2 actions")


@dataclass(frozen=True)
class Box:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.asarray(self.low, dtype=np.float64)
        high = np.asarray(self.high, dtype=np.float64)
        if low.shape != high.shape or low.ndim != 1 or not np.all(low < high):
            raise ValueError("Box requires 1-D low < high element-wise")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self) -> int:
        return self.low.shape[0]


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


CONSTANTS = {
    "cartpole-v1": {
        "gravity": 9.8,
        "masscart": 1.0,
        "masspole": 0.1,
        "length": 0.5,  # half the pole length
        "force_mag": 10.0,
        "tau": 0.02,
        "theta_threshold_radians": 12 * 2 * math.pi / 360,
        "x_threshold": 2.4,
        "reset_bound": 0.05,
        "time_limit": 500,
    },
    "acrobot-v1": {
        "dt": 0.2,
        "link_length_1": 1.0,
        "link_mass_1": 1.0,
        "link_mass_2": 1.0,
        "link_com_pos_1": 0.5,
        "link_com_pos_2": 0.5,
        "link_moi": 1.0,
        "max_vel_1": 4 * math.pi,
        "max_vel_2": 9 * math.pi,
        "avail_torque": (-1.0, 0.0, 1.0),
        "gravity": 9.8,
        "reset_bound": 0.1,
        "time_limit": 500,
    },
    "mountaincar-continuous-v0": {
        "min_action": -1.0,
        "max_action": 1.0,
        "min_position": -1.2,
        "max_position": 0.6,
        "max_speed": 0.07,
        "goal_position": 0.45,
        "goal_velocity": 0.0,
        "power": 0.0015,
        "reset_low": -0.6,
        "reset_high": -0.4,
        "time_limit": 999,
    },
}


class Env:
    """Base class: time limit, terminal bookkeeping and seeding.

    Subclasses implement ``_sample_initial_state`` and ``_advance`` (which
    returns ``(reward, terminated)``) and ``_observe``.
    """

    id: str = ""
    observation_dim: int = 0
    action_space: Discrete | Box

    def __init__(self, seed: int | None = None, time_limit: int | None = None):
        self.time_limit = time_limit or CONSTANTS[self.id]["time_limit"]
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.state: tuple[float, ...] | None = None
        self.steps = 0
        self._done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.Generator(np.random.PCG64(seed))
        self.state = self._sample_initial_state()
        self.steps = 0
        self._done = False
        return self._observe()

    def step(self, action) -> StepResult:
        if self._done:
            raise EnvError(f"{self.id}: step() called on a finished episode; call reset() first")
        reward, terminated = self._advance(action)
        self.steps += 1
        truncated = (not terminated) and self.steps >= self.time_limit
        self._done = terminated or truncated
        return StepResult(self._observe(), reward, terminated, truncated)

    def _sample_initial_state(self) -> tuple[float, ...]:
        raise NotImplementedError

    def _advance(self, action) -> tuple[float, bool]:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        return np.array(self.state, dtype=np.float64)


class CartPole(Env):
    id = "cartpole-v1"
    observation_dim = 4
    action_space = Discrete(2)

    def _sample_initial_state(self):
        b = CONSTANTS[self.id]["reset_bound"]
        return tuple(float(v) for v in self.rng.uniform(-b, b, size=4))

    def _advance(self, action):
        c = CONSTANTS[self.id]
        a = int(action)
        if a not in (0, 1):
            raise EnvError(f"invalid CartPole action {action!r}")
        self.state = cartpole_dynamics(self.state, a)
        x, _, theta, _ = self.state
        terminated = (
            x < -c["x_threshold"]
            or x > c["x_threshold"]
            or theta < -c["theta_threshold_radians"]
            or theta > c["theta_threshold_radians"]
        )
        return 1.0, terminated


def cartpole_dynamics(state, action: int):
    """One Euler step of the cart-pole equations of motion."""
    c = CONSTANTS["cartpole-v1"]
    x, x_dot, theta, theta_dot = state
    total_mass = c["masspole"] + c["masscart"]
    polemass_length = c["masspole"] * c["length"]
    force = c["force_mag"] if action == 1 else -c["force_mag"]
    costheta = math.cos(theta)
    sintheta = math.sin(theta)
    temp = (force + polemass_length * theta_dot**2 * sintheta) / total_mass
    thetaacc = (c["gravity"] * sintheta - costheta * temp) / (
        c["length"] * (4.0 / 3.0 - c["masspole"] * costheta**2 / total_mass)
    )
    xacc = temp - polemass_length * thetaacc * costheta / total_mass
    tau = c["tau"]
    return (
        x + tau * x_dot,
        x_dot + tau * xacc,
        theta + tau * theta_dot,
        theta_dot + tau * thetaacc,
    )


def _acrobot_dsdt(s, torque):
    c = CONSTANTS["acrobot-v1"]
    m1, m2 = c["link_mass_1"], c["link_mass_2"]
    l1 = c["link_length_1"]
    lc1, lc2 = c["link_com_pos_1"], c["link_com_pos_2"]
    i1 = i2 = c["link_moi"]
    g = c["gravity"]
    theta1, theta2, dtheta1, dtheta2 = s
    cos2 = math.cos(theta2)
    sin2 = math.sin(theta2)
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * cos2) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * cos2) + i2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2**2 * sin2
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin2
        + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2.0)
        + phi2
    )
    # "book" variant of the second joint acceleration
    ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * sin2 - phi2) / (
        m2 * lc2**2 + i2 - d2**2 / d1
    )
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return (dtheta1, dtheta2, ddtheta1, ddtheta2)


def _wrap(x, low, high):
    diff = high - low
    while x > high:
        x -= diff
    while x < low:
        x += diff
    return x


def acrobot_dynamics(state, action: int):
    """One RK4 step (dt=0.2) followed by angle wrapping and velocity bounds."""
    c = CONSTANTS["acrobot-v1"]
    torque = c["avail_torque"][action]
    dt = c["dt"]
    h = dt / 2.0
    y0 = state
    k1 = _acrobot_dsdt(y0, torque)
    k2 = _acrobot_dsdt(tuple(y + h * k for y, k in zip(y0, k1)), torque)
    k3 = _acrobot_dsdt(tuple(y + h * k for y, k in zip(y0, k2)), torque)
    k4 = _acrobot_dsdt(tuple(y + dt * k for y, k in zip(y0, k3)), torque)
    ns = [y + dt / 6.0 * (a + 2 * b + 2 * cc + d) for y, a, b, cc, d in zip(y0, k1, k2, k3, k4)]
    ns[0] = _wrap(ns[0], -math.pi, math.pi)
    ns[1] = _wrap(ns[1], -math.pi, math.pi)
    ns[2] = min(max(ns[2], -c["max_vel_1"]), c["max_vel_1"])
    ns[3] = min(max(ns[3], -c["max_vel_2"]), c["max_vel_2"])
    return tuple(ns)


class Acrobot(Env):
    id = "acrobot-v1"
    observation_dim = 6
    action_space = Discrete(3)

    def _sample_initial_state(self):
        b = CONSTANTS[self.id]["reset_bound"]
        return tuple(float(v) for v in self.rng.uniform(-b, b, size=4))

    def _advance(self, action):
        a = int(action)
        if a not in (0, 1, 2):
            raise EnvError(f"invalid Acrobot action {action!r}")
        self.state = acrobot_dynamics(self.state, a)
        t1, t2 = self.state[0], self.state[1]
        terminated = -math.cos(t1) - math.cos(t2 + t1) > 1.0
        # the reference environment pays 0 on the goal-reaching step
        return (0.0 if terminated else -1.0), terminated

    def _observe(self):
        t1, t2, d1, d2 = self.state
        return np.array(
            [math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), d1, d2], dtype=np.float64
        )


class MountainCarContinuous(Env):
    id = "mountaincar-continuous-v0"
    observation_dim = 2
    action_space = Box(np.array([-1.0]), np.array([1.0]))

    def _sample_initial_state(self):
        c = CONSTANTS[self.id]
        return (float(self.rng.uniform(c["reset_low"], c["reset_high"])), 0.0)

    def _advance(self, action):
        c = CONSTANTS[self.id]
        force = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0],
                              c["min_action"], c["max_action"]))
        position, velocity = self.state
        velocity += force * c["power"] - 0.0025 * math.cos(3 * position)
        velocity = min(max(velocity, -c["max_speed"]), c["max_speed"])
        position += velocity
        position = min(max(position, c["min_position"]), c["max_position"])
        if position == c["min_position"] and velocity < 0:
            velocity = 0.0
        self.state = (position, velocity)
        terminated = position >= c["goal_position"] and velocity >= c["goal_velocity"]
        reward = (100.0 if terminated else 0.0) - 0.1 * force**2
        return reward, terminated


ENVS = {cls.id: cls for cls in (CartPole, Acrobot, MountainCarContinuous)}


def make(env_id: str, seed: int | None = None) -> Env:
    try:
        return ENVS[env_id](seed=seed)
    except KeyError:
        raise ValueError(f"unknown env id {env_id!r}; choose from {sorted(ENVS)}") from None


def reset_support(env_id: str, observation: np.ndarray) -> bool:
    """True if ``observation`` could have been produced by ``reset``."""
    obs = np.asarray(observation)
    if env_id == "cartpole-v1":
        return bool(np.all(np.abs(obs) <= 0.05))
    if env_id == "acrobot-v1":
        t1 = math.atan2(obs[1], obs[0])
        t2 = math.atan2(obs[3], obs[2])
        return all(abs(v) <= 0.1 + 1e-12 for v in (t1, t2, obs[4], obs[5]))
    if env_id == "mountaincar-continuous-v0":
        return bool(-0.6 <= obs[0] <= -0.4 and obs[1] == 0.0)
    raise ValueError(env_id)


@dataclass
class EpisodeRecord:
    env_index: int
    episode_return: float
    length: int
    final_observation: np.ndarray
    terminated: bool
    truncated: bool


@dataclass
class VecStep:
    """Outcome of one vectorised step, in env-index order.

    ``observations`` holds post-reset observations for envs that finished;
    their terminal observations are in the matching :class:`EpisodeRecord`.
    """

    observations: np.ndarray
    rewards: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    episodes: list[EpisodeRecord] = field(default_factory=list)

    @property
    def results(self) -> list[StepResult]:
        return [
            StepResult(self.observations[i], float(self.rewards[i]),
                       bool(self.terminated[i]), bool(self.truncated[i]))
            for i in range(len(self.rewards))
        ]


class VecEnv:
    """A list of independent envs stepped in lock-step with autoreset.

    Env ``i`` is seeded with ``seed + i``.  Continuous actions are clipped to
    the action box here, so callers keep the raw sample for log-prob purposes.
    """

    def __init__(self, env_id: str, n_envs: int, seed: int = 0):
        if n_envs <= 0:
            raise ValueError("n_envs must be positive")
        self.env_id = env_id
        self.envs = [make(env_id, seed=seed + i) for i in range(n_envs)]
        self.seed = seed
        self._returns = np.zeros(n_envs)
        self._obs: np.ndarray | None = None

    @property
    def n_envs(self) -> int:
        return len(self.envs)

    @property
    def action_space(self):
        return self.envs[0].action_space

    @property
    def observation_dim(self) -> int:
        return self.envs[0].observation_dim

    def reset(self) -> np.ndarray:
        self._obs = np.stack([env.reset(seed=self.seed + i) for i, env in enumerate(self.envs)])
        self._returns[:] = 0.0
        return self._obs.copy()

    def step(self, actions, active: np.ndarray | None = None) -> VecStep:
        """Step every env (or only those with ``active[i]``) and autoreset finished ones.

        Inactive envs are left untouched and report reward 0 with both flags false.
        """
        if self._obs is None:
            raise EnvError("VecEnv.step() before reset()")
        n = self.n_envs
        obs = self._obs.copy()
        rewards = np.zeros(n)
        terminated = np.zeros(n, dtype=bool)
        truncated = np.zeros(n, dtype=bool)
        episodes = []
        space = self.action_space
        for i, env in enumerate(self.envs):
            if active is not None and not active[i]:
                continue
            a = actions[i]
            if isinstance(space, Box):
                a = np.clip(a, space.low, space.high)
            res = env.step(a)
            rewards[i] = res.reward
            terminated[i] = res.terminated
            truncated[i] = res.truncated
            self._returns[i] += res.reward
            if res.terminated or res.truncated:
                episodes.append(EpisodeRecord(i, float(self._returns[i]), env.steps,
                                              res.observation, res.terminated, res.truncated))
                self._returns[i] = 0.0
                obs[i] = env.reset()
            else:
                obs[i] = res.observation
        self._obs = obs
        return VecStep(obs.copy(), rewards, terminated, truncated, episodes)


def vec_step(envs: VecEnv, actions, active=None) -> VecStep:
    return envs.step(actions, active)


def describe() -> list[dict]:
    """Env ids with observation/action dimensions, as printed by ``gradbench list-envs``."""
    rows = []
    for env_id, cls in ENVS.items():
        space = cls.action_space
        if isinstance(space, Discrete):
            action = {"kind": "discrete", "count": space.count}
        else:
            action = {"kind": "continuous", "dim": space.dim,
                      "low": space.low.tolist(), "high": space.high.tolist()}
        rows.append({"id": env_id, "observation_dim": cls.observation_dim, "action": action,
                     "time_limit": CONSTANTS[env_id]["time_limit"]})
    return rows
