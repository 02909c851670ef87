"""
A small discount sweep and its learning curves
==============================================

Runs a two-point GRPO discount sweep on CartPole with three seeds each,
aggregates the runs into curves with 95% confidence half-widths, and writes
the six-column CSV (and an SVG if matplotlib is installed).  Output goes to
``$GRADBENCH_OUT`` (default ``./runs``) under ``notebook_gamma``.
"""

from gradbench import SweepSpec, TrainConfig, run_sweep
from gradbench.experiment import aggregate, default_out_dir, export_csv, load_runs

out = default_out_dir() / "notebook_gamma"
spec = SweepSpec(
    TrainConfig(env_id="cartpole-v1", algo="grpo", group_size=8, total_steps=60_000),
    axes=[("gamma", [0.0, 0.99])],
    seeds=[0, 1, 2],
)

# %%
# Completed (config, seed) pairs are skipped, so re-running only fills gaps.
for rec in run_sweep(spec, out):
    print(rec.status, rec.label, rec.seed)

# %%
for label, _ in spec.configs():
    logs = load_runs(out / label)
    curve = aggregate(logs, bin_width=5000, sigma=5)
    mean, ci = curve.final()
    print(f"{label}: final smoothed return {mean:.1f} +/- {ci:.1f} over {len(logs)} seeds")
    path = export_csv(curve, out / f"{label}.csv")
    print("  wrote", path)
    try:
        from gradbench.experiment import plot_svg

        print("  wrote", plot_svg(curve, out / f"{label}.svg", title=label))
    except ImportError:
        pass
