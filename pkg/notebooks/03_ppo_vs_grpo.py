"""
PPO and GRPO on CartPole
========================

Trains the learned-critic learner and the group-relative learner for a
short budget and prints coarse learning curves.  With 150k steps each this
takes around ten seconds per run on one core.
"""

import numpy as np

from gradbench import TrainConfig, aggregate, train

BUDGET = 150_000

runs = {
    "ppo": train(TrainConfig(env_id="cartpole-v1", algo="ppo", total_steps=BUDGET, seed=0)),
    "grpo": train(TrainConfig(env_id="cartpole-v1", algo="grpo", gamma=1.0, group_size=8, total_steps=BUDGET, seed=0)),
}

# %%
for name, run in runs.items():
    cfg = run.metadata["config"]
    print(f"{name}: n_steps={cfg['n_steps']} gamma={cfg['gamma']} "
          f"iterations={run.metadata['iterations']} episodes={len(run)}")

# %%
# Same x grid for both: 10k-step bins, light smoothing.
for name, run in runs.items():
    curve = aggregate([run], bin_width=10_000, sigma=1)
    print(f"{name:<5}", " ".join(f"{m:5.0f}" for m in curve.mean_smoothed))

# %%
# The trained actor is attached to the returned log.
probe = np.zeros((1, 4))
logp, entropy = runs["ppo"].agent.actor.evaluate(probe, np.array([0]))
print(f"PPO policy at the upright state: p(left)={np.exp(logp[0]):.3f}, entropy={entropy[0]:.3f}")
