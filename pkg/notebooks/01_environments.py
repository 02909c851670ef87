"""
Environments and vectorised rollouts
====================================

The three classic-control tasks are implemented directly in numpy.  This
script prints their interfaces, steps a single CartPole by hand, and runs a
vectorised uniform-random rollout to show autoreset and episode records.
"""

import numpy as np

from gradbench import envs

# %%
# What is available
for row in envs.describe():
    print(row)

# %%
# A single environment: reset with a seed, then push right until the pole falls.
env = envs.make("cartpole-v1", seed=0)
obs = env.reset(seed=0)
print("initial observation", obs)
steps = 0
while True:
    res = env.step(1)
    steps += 1
    if res.terminated or res.truncated:
        break
print(f"always-right policy falls after {steps} steps, final x_dot={res.observation[1]:.3f}")

# %%
# Eight Acrobot copies stepped together.  Finished copies reset themselves and
# the finished episode is reported in ``episodes``.
vec = envs.VecEnv("acrobot-v1", n_envs=8, seed=0)
vec.reset()
rng = np.random.default_rng(0)
finished = []
for t in range(1200):
    out = vec.step(rng.integers(0, 3, size=8))
    finished += out.episodes
lengths = [ep.length for ep in finished]
print(f"{len(finished)} random Acrobot episodes finished; lengths {sorted(lengths)[:5]} ...")
print("time-limited:", sum(ep.truncated for ep in finished), "swung up:", sum(ep.terminated for ep in finished))

# %%
# The continuous task clips actions to [-1, 1] before they reach the dynamics.
mc = envs.VecEnv("mountaincar-continuous-v0", n_envs=2, seed=3)
mc.reset()
out = mc.step(np.array([[5.0], [-5.0]]))
print("mountain car rewards for out-of-range actions:", out.rewards)
