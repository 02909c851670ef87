"""
Advantage estimators side by side
=================================

Every learner in the package shares the clipped update and differs only in
how an advantage is assigned to each step.  Here the estimators are applied
to a hand-made batch of four episodes.
"""

import numpy as np

from gradbench.advantage import AdvantageConfig, EmaState, Mode, apply_baseline, discounted_returns, gae, group_normalize

# %%
# Four CartPole-like episodes (+1 per step) of different lengths.
lengths = [12, 30, 7, 51]
returns = np.array([float(n) for n in lengths])
print("episodic returns", returns)

# %%
# Critic-free baselines turn one return per episode into one advantage per
# episode; the trainer broadcasts it to all of the episode's steps.
rng = np.random.default_rng(0)
ema = EmaState(value=20.0, initialized=True)
for mode in Mode:
    if mode is Mode.LEARNED_CRITIC_GAE:
        continue
    adv = apply_baseline(AdvantageConfig(mode=mode), returns, ema=ema, rng=rng)
    print(f"{mode.value:<20} {np.round(adv, 3)}")
print("EMA baseline after the batch:", ema.value)

# %%
# Group normalisation ignores shifts and (up to epsilon) rescaling.
print(np.round(group_normalize(returns), 6))
print(np.round(group_normalize(returns * 10 - 3), 6))

# %%
# With a critic, advantages are per step.  A toy three-step episode:
r = np.array([1.0, 1.0, 1.0])
v = np.array([2.5, 1.8, 0.9])
done = np.array([0.0, 0.0, 1.0])
print("GAE(0.99, 0.95):", gae(r, v, 0.0, done, 0.99, 0.95))
print("lambda=1 recovers returns minus values:", gae(r, v, 0.0, done, 0.99, 1.0),
      discounted_returns(r, done, 0.99) - v)
