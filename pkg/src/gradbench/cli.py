"""``gradbench`` command line: train, sweep, aggregate, list-envs.

Config files are JSON.  ``train`` accepts a flat TrainConfig mapping (or a
sweep document, whose ``base`` is used); ``sweep`` takes a sweep document
``{"base": {...}, "axes": [[name, [values...]], ...], "seeds": "0..9"}``.
Bundled presets can be named instead of a path.  Command-line flags override
file values, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import envs
from .advantage import ConfigError
from .experiment import (
    SweepSpec,
    aggregate,
    default_out_dir,
    export_csv,
    load_runs,
    parse_seed_range,
    plan,
    plot_svg,
    run_path,
    run_sweep,
)
from .nnet import save_params
from .trainer import ALGOS, NonFiniteLossError, TrainConfig, train

PRESETS = ("fig2_baselines", "fig3_gamma", "fig4_groupsize")

# flag dest -> TrainConfig field
_OVERRIDES = {
    "env": "env_id",
    "algo": "algo",
    "gamma": "gamma",
    "lam": "lam",
    "group_size": "group_size",
    "n_envs": "n_envs",
    "n_steps": "n_steps",
    "total_steps": "total_steps",
    "entropy_coef": "entropy_coef",
    "truncation_bootstrap": "truncation_bootstrap",
    "anneal_lr": "anneal_lr",
    "learning_rate": "learning_rate",
    "n_epochs": "n_epochs",
    "n_minibatches": "n_minibatches",
    "clip_epsilon": "clip_epsilon",
    "rg_per_batch": "rg_per_batch",
}


def load_document(ref) -> dict:
    """Read a JSON config from a path or a bundled preset name."""
    path = Path(ref)
    if path.is_file():
        text = path.read_text()
    elif ref in PRESETS:
        text = resources.files("gradbench.presets").joinpath(f"{ref}.json").read_text()
    else:
        raise ConfigError(f"config {ref!r} is neither a file nor a preset ({', '.join(PRESETS)})")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{ref}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{ref}: expected a JSON object")
    return data


def _overrides(args) -> dict:
    out = {}
    for dest, name in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            out[name] = value
    # a group is one episode per env, so --group-size implies --n-envs unless given
    if "group_size" in out and "n_envs" not in out:
        out["n_envs"] = out["group_size"]
    return out


def _add_config_flags(p):
    g = p.add_argument_group("training configuration")
    g.add_argument("--config", help="JSON config file or preset name")
    g.add_argument("--env", help="environment id (see list-envs)")
    g.add_argument("--algo", choices=sorted(ALGOS))
    g.add_argument("--gamma", type=float)
    g.add_argument("--lambda", dest="lam", type=float, help="GAE lambda")
    g.add_argument("--group-size", type=int, help="GRPO group size; also sets --n-envs unless given")
    g.add_argument("--n-envs", type=int)
    g.add_argument("--n-steps", help="'fixed:K' or 'episode'")
    g.add_argument("--total-steps", type=int)
    g.add_argument("--entropy-coef", type=float)
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--n-epochs", type=int)
    g.add_argument("--n-minibatches", type=int)
    g.add_argument("--clip-epsilon", type=float)
    g.add_argument("--truncation-bootstrap", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--anneal-lr", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--rg-per-batch", action=argparse.BooleanOptionalAction, default=None,
                   help="draw one random-Gaussian baseline per batch instead of per episode")
    g.add_argument("--out", type=Path, help="output root (default $GRADBENCH_OUT or ./runs)")


def _base_config(args, doc: dict | None) -> TrainConfig:
    base = {}
    if doc is not None:
        base = dict(doc.get("base", doc)) if "base" in doc or "axes" in doc else dict(doc)
    base.update(_overrides(args))
    if base.get("group_size") is not None and "n_envs" not in base:
        base["n_envs"] = base["group_size"]
    return TrainConfig.from_dict(base)


def cmd_train(args) -> int:
    doc = load_document(args.config) if args.config else None
    cfg = _base_config(args, doc)
    if args.seed is not None:
        cfg.seed = args.seed
    cfg = cfg.resolved()
    out = args.out or default_out_dir()
    label = f"{cfg.env_id}__{cfg.algo}"
    path = run_path(out, label, cfg.seed)
    try:
        run = train(cfg)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    log_path, _ = run.write(path)
    tail = run.returns[-cfg.n_envs:]
    print(f"{label} seed {cfg.seed}: {len(run)} episodes, {run.metadata['global_steps']} steps, "
          f"final mean return {np.mean(tail) if tail else float('nan'):.2f}")
    print(f"wrote {log_path}")
    if args.save_params:
        save_params(args.save_params, run.agent.params)
        print(f"wrote {args.save_params}")
    return 0


def cmd_sweep(args) -> int:
    if not args.config:
        raise ConfigError("sweep needs --config (a sweep file or one of: " + ", ".join(PRESETS) + ")")
    doc = load_document(args.config)
    spec = SweepSpec.from_dict(doc)
    spec.base = _base_config(args, doc)
    if args.seeds is not None:
        spec.seeds = parse_seed_range(args.seeds)
    out = args.out or default_out_dir()
    pending, done = plan(spec, out)
    labels = sorted({label for label, *_ in pending + done})
    print(f"{len(labels)} configs x {len(spec.seeds)} seeds = {len(pending) + len(done)} runs "
          f"({len(done)} already completed) under {out}")
    if args.dry_run:
        for label, seed, cfg, _ in pending:
            print(f"  pending  {label}  seed {seed}  n_envs {cfg.n_envs}  n_steps {cfg.n_steps}  gamma {cfg.gamma}")
        for label, seed, _, _ in done:
            print(f"  done     {label}  seed {seed}")
        return 0

    def progress(rec, k, n):
        print(f"[{k:>{len(str(n))}}/{n}] {rec.status:<9} {rec.label}  seed {rec.seed}"
              + (f"  ({rec.error})" if rec.error else ""), flush=True)

    records = run_sweep(spec, out, parallelism=args.jobs, progress=progress)
    failed = [r for r in records if r.status == "failed"]
    if failed:
        print(f"{len(failed)} runs failed", file=sys.stderr)
        return 1
    return 0


def _config_dirs(root: Path) -> list[Path]:
    if any(root.glob("seed_*.meta.json")):
        return [root]
    return sorted(d for d in root.iterdir() if d.is_dir() and any(d.glob("seed_*.meta.json")))


def cmd_aggregate(args) -> int:
    root = Path(args.path)
    if not root.is_dir():
        print(f"error: {root} is not a directory", file=sys.stderr)
        return 1
    dirs = _config_dirs(root)
    found = 0
    for d in dirs:
        logs = load_runs(d)
        if not logs:
            continue
        found += 1
        sigma = args.sigma if args.sigma > 0 else None
        curve = aggregate(logs, bin_width=args.bin_width, axis=args.axis, sigma=sigma)
        csv_path = Path(args.csv) if args.csv and len(dirs) == 1 else d / f"curve_{args.axis}.csv"
        export_csv(curve, csv_path)
        mean, ci = curve.final(smoothed=sigma is not None)
        print(f"{d.name}: {len(logs)} seeds, {len(curve)} bins, final return {mean:.2f} +/- {ci:.2f} -> {csv_path}")
        if args.svg is not None:
            svg = Path(args.svg) if args.svg and len(dirs) == 1 else csv_path.with_suffix(".svg")
            plot_svg(curve, svg, title=d.name, axis=args.axis)
            print(f"  plot -> {svg}")
    if not found:
        print(f"error: no completed run logs under {root}", file=sys.stderr)
        return 1
    return 0


def cmd_list_envs(args) -> int:
    rows = envs.describe()
    if args.json:
        print(json.dumps(rows, indent=1))
        return 0
    print(f"{'id':<28}{'obs_dim':>8}  {'action':<28}{'time_limit':>10}")
    for r in rows:
        a = r["action"]
        action = f"discrete({a['count']})" if a["kind"] == "discrete" else f"box(dim={a['dim']}, [{a['low'][0]:g}, {a['high'][0]:g}])"
        print(f"{r['id']:<28}{r['observation_dim']:>8}  {action:<28}{r['time_limit']:>10}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one (config, seed) pair")
    _add_config_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--save-params", type=Path, help="also write final network parameters (binary checkpoint)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run every (config, seed) pair of a sweep, resuming completed ones")
    _add_config_flags(p)
    p.add_argument("--seeds", help="seed range 'A..B' (inclusive) or comma list")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--dry-run", action="store_true", help="print the plan and exit")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("aggregate", help="cross-seed learning curves (CSV, optional SVG)")
    p.add_argument("path", type=Path, help="a config directory, or a sweep directory of them")
    p.add_argument("--axis", choices=("steps", "iterations"), default="steps")
    p.add_argument("--bin-width", type=float, help="default 5000 steps or 1 iteration")
    p.add_argument("--sigma", type=float, default=5.0, help="Gaussian smoothing width in bins (0 disables)")
    p.add_argument("--csv", help="output CSV path (single config only)")
    p.add_argument("--svg", nargs="?", const="", default=None, help="also render an SVG plot")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("list-envs", help="available environments")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_list_envs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
