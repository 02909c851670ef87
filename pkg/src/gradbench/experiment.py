"""Seed x config sweeps, learning-curve aggregation and export.

On disk a sweep looks like::

    <out>/<label>/seed_<k>.runlog.csv   # global_step,episode_return,episode_length
    <out>/<label>/seed_<k>.meta.json    # resolved config, status, iteration boundaries

where ``<label>`` joins the swept axis values, e.g. ``algo=grpo__gamma=0.99``.
A pair counts as done once its sidecar says ``"status": "completed"``.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .advantage import ConfigError
from .trainer import RunLog, TrainConfig, runlog_paths, train

log = logging.getLogger(__name__)

Z95 = 1.96
CURVE_COLUMNS = ("bin_step", "mean_return", "ci_halfwidth", "n_seeds", "mean_smoothed", "ci_halfwidth_smoothed")

GAMMA_SWEEP = (0.0, 0.1, 0.5, 0.95, 0.99, 1.0)
GROUP_SIZE_SWEEP = (8, 16, 32, 64, 128)
BASELINE_ALGOS = ("ppo", "reinforce-clip", "ppo-gaussian-baseline", "ppo-ema", "ppo-batchmean", "grpo-batch")


@dataclass
class SweepSpec:
    """Cartesian product of ``axes`` applied to ``base``, each run once per seed.

    The ``group_size`` axis also sets ``n_envs`` so a group is one episode per env.
    """

    base: TrainConfig
    axes: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: list(range(10)))

    def __post_init__(self):
        if isinstance(self.axes, dict):
            self.axes = list(self.axes.items())
        self.axes = [(str(name), list(values)) for name, values in self.axes]
        self.seeds = [int(s) for s in self.seeds]

    def configs(self) -> list[tuple[str, TrainConfig]]:
        names = [name for name, _ in self.axes]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate sweep axis in {names}")
        out = []
        for combo in itertools.product(*(values for _, values in self.axes)):
            cfg = self.base
            parts = []
            for name, value in zip(names, combo):
                cfg = _set_axis(cfg, name, value)
                parts.append(f"{name}={value}")
            out.append(("__".join(parts) or "base", cfg))
        return out

    def runs(self) -> list[tuple[str, int, TrainConfig]]:
        """Every (label, seed, config) pair; duplicates and invalid configs raise ConfigError."""
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds in {self.seeds}")
        configs = self.configs()
        labels = [label for label, _ in configs]
        if len(set(labels)) != len(labels):
            raise ConfigError("duplicate (config, seed) pairs: an axis repeats a value")
        pairs = []
        for label, cfg in configs:
            for seed in self.seeds:
                pairs.append((label, seed, replace(cfg, seed=seed).resolved()))
        return pairs

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "axes": [[n, v] for n, v in self.axes], "seeds": self.seeds}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        unknown = set(data) - {"base", "axes", "seeds", "name", "description"}
        if unknown:
            raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
        seeds = data.get("seeds", list(range(10)))
        if isinstance(seeds, str):
            seeds = parse_seed_range(seeds)
        return cls(TrainConfig.from_dict(data.get("base", {})), data.get("axes", []), seeds)


def _set_axis(cfg: TrainConfig, name: str, value) -> TrainConfig:
    if name == "group_size":
        return replace(cfg, group_size=int(value), n_envs=int(value))
    if name not in TrainConfig.__dataclass_fields__:
        raise ConfigError(f"unknown sweep axis {name!r}")
    return replace(cfg, **{name: value})


def parse_seed_range(text: str) -> list[int]:
    """``"0..9"`` (inclusive) or a comma list ``"0,3,5"``."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s.strip()]


@dataclass
class RunRecord:
    label: str
    seed: int
    status: str
    path: Path
    error: str | None = None


def run_path(out_dir, label: str, seed: int) -> Path:
    return Path(out_dir) / label / f"seed_{seed}"


def is_completed(path) -> bool:
    log_path, meta_path = runlog_paths(path)
    if not (log_path.exists() and meta_path.exists()):
        return False
    try:
        return json.loads(meta_path.read_text()).get("status") == "completed"
    except json.JSONDecodeError:
        return False


def run_one(config: TrainConfig, path) -> RunRecord:
    """Train one (config, seed) pair and write its RunLog; failures are recorded, not raised."""
    label = Path(path).parent.name
    try:
        run = train(config)
        run.write(path)
        return RunRecord(label, config.seed, "completed", Path(path))
    except Exception as exc:  # noqa: BLE001 - any crash becomes a failed record
        log_path, meta_path = runlog_paths(path)
        meta_path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"config": config.to_dict(), "status": "failed", "error": repr(exc),
                "traceback": traceback.format_exc()}
        meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        return RunRecord(label, config.seed, "failed", Path(path), repr(exc))


def plan(spec: SweepSpec, out_dir) -> tuple[list, list]:
    """Split the sweep into (pending, already-completed) run tuples."""
    pending, done = [], []
    for label, seed, cfg in spec.runs():
        path = run_path(out_dir, label, seed)
        (done if is_completed(path) else pending).append((label, seed, cfg, path))
    return pending, done


def run_sweep(spec: SweepSpec, out_dir, parallelism: int = 1, progress=None) -> list[RunRecord]:
    """Execute every pending (config, seed) pair, ``parallelism`` at a time.

    Completed pairs already on disk are skipped, so an interrupted sweep resumes.
    ``progress(record, n_done, n_total)`` is called as runs finish.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    pending, done = plan(spec, out_dir)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "sweep.json").write_text(json.dumps(spec.to_dict(), indent=1) + "\n")
    records = [RunRecord(label, seed, "skipped", path) for label, seed, _, path in done]
    total = len(pending)
    if parallelism == 1 or total <= 1:
        for k, (label, seed, cfg, path) in enumerate(pending, 1):
            rec = run_one(cfg, path)
            records.append(rec)
            if progress:
                progress(rec, k, total)
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(run_one, cfg, path) for _, _, cfg, path in pending]
            for k, fut in enumerate(as_completed(futures), 1):
                rec = fut.result()
                records.append(rec)
                if progress:
                    progress(rec, k, total)
    return records


def load_runs(config_dir) -> dict[int, RunLog]:
    """Completed RunLogs of one config directory, keyed by seed."""
    runs = {}
    for meta in sorted(Path(config_dir).glob("seed_*.meta.json")):
        base = meta.with_name(meta.name[: -len(".meta.json")])
        if is_completed(base):
            runs[int(base.name.split("_", 1)[1])] = RunLog.read(base)
    return runs


@dataclass
class AggregateCurve:
    """Cross-seed curve on a regular grid.  ``x[k]`` is the right edge of bin ``k``."""

    x: np.ndarray
    mean: np.ndarray
    ci_halfwidth: np.ndarray
    n_seeds: np.ndarray
    episode_counts: np.ndarray
    per_seed: np.ndarray
    mean_smoothed: np.ndarray | None = None
    ci_halfwidth_smoothed: np.ndarray | None = None

    def __len__(self):
        return len(self.x)

    def final(self, smoothed: bool = True) -> tuple[float, float]:
        """(mean, CI half-width) at the last bin."""
        if smoothed:
            if self.mean_smoothed is None:
                raise ValueError("curve has not been smoothed")
            return float(self.mean_smoothed[-1]), float(self.ci_halfwidth_smoothed[-1])
        return float(self.mean[-1]), float(self.ci_halfwidth[-1])


def _binned_seed_curve(x, returns, n_bins: int, bin_width: float):
    x = np.asarray(x, dtype=np.float64)
    idx = np.clip(np.ceil(x / bin_width).astype(np.int64) - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=np.asarray(returns, dtype=np.float64), minlength=n_bins)
    values = np.full(n_bins, np.nan)
    hit = counts > 0
    values[hit] = sums[hit] / counts[hit]
    # carry forward, then back-fill the bins before the first completed episode
    last = np.maximum.accumulate(np.where(hit, np.arange(n_bins), -1))
    first = int(np.argmax(hit)) if hit.any() else 0
    values = np.where(last >= 0, values[np.maximum(last, 0)], values[first])
    return values, counts


def aggregate(logs, bin_width: float | None = None, axis: str = "steps", sigma: float | None = None) -> AggregateCurve:
    """Bin each seed's episodic returns, then average across seeds with a 95% normal CI.

    ``axis="steps"`` bins by global env step (default width 5000);
    ``axis="iterations"`` bins by update iteration (default width 1).
    Within a bin a seed contributes the mean of its episodes; empty bins
    repeat the seed's previous value.  ``sigma`` also fills the smoothed columns.
    """
    logs = list(logs.values()) if isinstance(logs, dict) else list(logs)
    if not logs:
        raise ValueError("aggregate() needs at least one RunLog")
    if axis not in ("steps", "iterations"):
        raise ValueError(f"axis must be 'steps' or 'iterations', got {axis!r}")
    if bin_width is None:
        bin_width = 5000 if axis == "steps" else 1
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    xs, x_max = [], 0.0
    for run in logs:
        if axis == "steps":
            x = np.asarray(run.global_steps, dtype=np.float64)
            end = run.iteration_steps[-1] if run.iteration_steps else (x.max() if len(x) else 0)
        else:
            x = run.iterations().astype(np.float64)
            end = len(run.iteration_steps) if run.iteration_steps else (x.max() if len(x) else 0)
        xs.append(x)
        x_max = max(x_max, float(end))
    n_bins = int(math.ceil(x_max / bin_width))
    rows, counts = [], np.zeros(n_bins, dtype=np.int64)
    for run, x in zip(logs, xs):
        if len(x) == 0 or n_bins == 0:
            continue
        values, c = _binned_seed_curve(x, run.returns, n_bins, bin_width)
        rows.append(values)
        counts += c
    per_seed = np.array(rows).reshape(len(rows), n_bins)
    n = len(rows)
    # sorting first makes the reductions independent of seed order
    ordered = np.sort(per_seed, axis=0)
    mean = ordered.sum(axis=0) / n if n else np.zeros(n_bins)
    if n > 1:
        std = np.sqrt(((ordered - mean) ** 2).sum(axis=0) / (n - 1))
        ci = Z95 * std / math.sqrt(n)
    else:
        ci = np.zeros(n_bins)
    x_grid = bin_width * np.arange(1, n_bins + 1)
    if float(bin_width).is_integer():
        x_grid = x_grid.astype(np.int64)
    curve = AggregateCurve(x_grid, mean, ci, np.full(n_bins, n), counts, per_seed)
    if sigma is not None:
        curve = smooth_curve(curve, sigma)
    return curve


def gaussian_kernel(sigma: float, truncate: float = 4.0) -> np.ndarray:
    radius = int(truncate * sigma + 0.5)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def smooth(values, sigma: float = 5.0, truncate: float = 4.0) -> np.ndarray:
    """Gaussian filter (kernel cut at ``truncate * sigma``, unit mass, mirrored edges)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v.copy()
    k = gaussian_kernel(sigma, truncate)
    r = len(k) // 2
    padded = np.pad(v, r, mode="symmetric")
    return np.convolve(padded, k, mode="valid")


def smooth_curve(curve: AggregateCurve, sigma: float = 5.0) -> AggregateCurve:
    return replace(curve, mean_smoothed=smooth(curve.mean, sigma),
                   ci_halfwidth_smoothed=smooth(curve.ci_halfwidth, sigma))


def _fmt(v) -> str:
    return "%.17g" % v


def export_csv(curve: AggregateCurve, path) -> Path:
    """Write the six-column curve CSV (smoothed columns are empty if not smoothed)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(CURVE_COLUMNS)]
    for k in range(len(curve)):
        ms = "" if curve.mean_smoothed is None else _fmt(curve.mean_smoothed[k])
        cs = "" if curve.ci_halfwidth_smoothed is None else _fmt(curve.ci_halfwidth_smoothed[k])
        lines.append(",".join([_fmt(curve.x[k]), _fmt(curve.mean[k]), _fmt(curve.ci_halfwidth[k]),
                               str(int(curve.n_seeds[k])), ms, cs]))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_curve_csv(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    if tuple(header) != CURVE_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    cols = {name: [] for name in header}
    for line in lines[1:]:
        for name, cell in zip(header, line.split(",")):
            cols[name].append(float(cell) if cell else math.nan)
    return {name: np.array(v) for name, v in cols.items()}


def export_logs_csv(logs: dict[int, RunLog], path) -> Path:
    """All seeds' episode records in one file, ordered by seed then step."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["seed,global_step,episode_return,episode_length"]
    for seed in sorted(logs):
        run = logs[seed]
        lines += [f"{seed},{s},{_fmt(r)},{n}" for s, r, n in zip(run.global_steps, run.returns, run.lengths)]
    path.write_text("\n".join(lines) + "\n")
    return path


def plot_svg(curve: AggregateCurve, path, title: str = "", axis: str = "steps") -> Path:
    """Static line plot of the (smoothed if available) mean with its CI band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    mean = curve.mean if curve.mean_smoothed is None else curve.mean_smoothed
    ci = curve.ci_halfwidth if curve.ci_halfwidth_smoothed is None else curve.ci_halfwidth_smoothed
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve.x, mean)
    ax.fill_between(curve.x, mean - ci, mean + ci, alpha=0.25)
    ax.set_xlabel("environment steps" if axis == "steps" else "update iteration")
    ax.set_ylabel("episodic return")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)


def default_out_dir() -> Path:
    return Path(os.environ.get("GRADBENCH_OUT", "runs"))
