import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradbench.advantage import ConfigError
from gradbench.experiment import (
    CURVE_COLUMNS,
    GAMMA_SWEEP,
    SweepSpec,
    aggregate,
    export_csv,
    export_logs_csv,
    gaussian_kernel,
    is_completed,
    load_runs,
    parse_seed_range,
    plan,
    read_curve_csv,
    run_path,
    run_sweep,
    smooth,
)
from gradbench.trainer import RunLog, TrainConfig


def fake_log(steps, returns, iteration_steps=None):
    run = RunLog()
    for s, r in zip(steps, returns):
        run.append(s, r, 10)
    run.iteration_steps = list(iteration_steps or [max(steps)])
    return run


def test_sweep_enumerates_config_seed_pairs():
    spec = SweepSpec(TrainConfig(algo="grpo"), [("gamma", list(GAMMA_SWEEP))], seeds=list(range(10)))
    runs = spec.runs()
    assert len(runs) == 60
    assert len({(label, seed) for label, seed, _ in runs}) == 60
    assert {cfg.gamma for _, _, cfg in runs} == set(GAMMA_SWEEP)


def test_group_size_axis_sets_n_envs():
    spec = SweepSpec(TrainConfig(algo="grpo"), {"group_size": [8, 64]}, seeds=[0])
    cfgs = [cfg for _, _, cfg in spec.runs()]
    assert [(c.group_size, c.n_envs) for c in cfgs] == [(8, 8), (64, 64)]


def test_sweep_rejects_duplicates_and_bad_axes():
    with pytest.raises(ConfigError):
        SweepSpec(TrainConfig(), [], seeds=[0, 0]).runs()
    with pytest.raises(ConfigError):
        SweepSpec(TrainConfig(), [("gamma", [0.9, 0.9])], seeds=[0]).runs()
    with pytest.raises(ConfigError):
        SweepSpec(TrainConfig(), [("colour", [1])], seeds=[0]).runs()
    with pytest.raises(ConfigError):
        SweepSpec(TrainConfig(algo="grpo"), [("n_steps", ["fixed:128"])], seeds=[0]).runs()
    with pytest.raises(ConfigError):
        SweepSpec.from_dict({"base": {}, "extra": 1})


def test_seed_range_and_spec_round_trip():
    assert parse_seed_range("0..9") == list(range(10))
    assert parse_seed_range("1,4,7") == [1, 4, 7]
    spec = SweepSpec(TrainConfig(algo="grpo"), [("gamma", [0.0, 1.0])], seeds=parse_seed_range("3..5"))
    back = SweepSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert back.runs() == spec.runs()


def test_sweep_resumes_after_partial_run(tmp_path):
    base = TrainConfig(algo="ppo", total_steps=1024)
    spec = SweepSpec(base, [("lam", [0.9, 0.95])], seeds=[0, 1])
    first = SweepSpec(base, [("lam", [0.9])], seeds=[0])
    run_sweep(first, tmp_path)
    pending, done = plan(spec, tmp_path)
    assert len(pending) == 3 and len(done) == 1
    before = (tmp_path / "lam=0.9" / "seed_0.runlog.csv").read_bytes()
    records = run_sweep(spec, tmp_path)
    assert sorted(r.status for r in records) == ["completed"] * 3 + ["skipped"]
    assert (tmp_path / "lam=0.9" / "seed_0.runlog.csv").read_bytes() == before
    assert plan(spec, tmp_path)[0] == []
    assert sorted(load_runs(tmp_path / "lam=0.95")) == [0, 1]
    assert (tmp_path / "sweep.json").exists()


def test_failed_runs_are_recorded(tmp_path, monkeypatch):
    import gradbench.experiment as ex

    def boom(cfg):
        raise FloatingPointError("nan loss")

    monkeypatch.setattr(ex, "train", boom)
    spec = SweepSpec(TrainConfig(total_steps=1024), [], seeds=[0])
    (rec,) = run_sweep(spec, tmp_path)
    assert rec.status == "failed"
    path = run_path(tmp_path, "base", 0)
    assert not is_completed(path)
    meta = json.loads(path.with_name("seed_0.meta.json").read_text())
    assert meta["status"] == "failed" and "nan loss" in meta["error"]
    assert load_runs(tmp_path / "base") == {}


def test_single_seed_has_zero_ci():
    curve = aggregate([fake_log([1000, 6000], [3.0, 5.0])])
    np.testing.assert_array_equal(curve.ci_halfwidth, 0.0)
    np.testing.assert_array_equal(curve.mean, [3.0, 5.0])


def test_two_seed_ci_value():
    curve = aggregate([fake_log([5000], [100.0]), fake_log([5000], [200.0])])
    assert curve.mean[0] == 150.0
    expected = 1.96 * math.sqrt(((100 - 150) ** 2 + (200 - 150) ** 2) / 1) / math.sqrt(2)
    assert curve.ci_halfwidth[0] == pytest.approx(expected, abs=1e-12)
    assert curve.ci_halfwidth[0] == pytest.approx(98.0, abs=0.01)


def test_identical_seeds_zero_ci():
    runs = [fake_log([100, 5200, 12000], [1.0, 2.0, 7.0]) for _ in range(5)]
    curve = aggregate(runs)
    np.testing.assert_array_equal(curve.ci_halfwidth, 0.0)


def test_binning_carry_forward_and_backfill():
    # bins (0,5000], (5000,10000], (10000,15000], (15000,20000]
    curve = aggregate([fake_log([7000, 9000, 16000], [2.0, 4.0, 10.0], [20000])])
    np.testing.assert_array_equal(curve.x, [5000, 10000, 15000, 20000])
    np.testing.assert_array_equal(curve.mean, [3.0, 3.0, 3.0, 10.0])
    np.testing.assert_array_equal(curve.episode_counts, [0, 2, 0, 1])
    # a step exactly on an edge belongs to the bin it closes
    edge = aggregate([fake_log([5000, 5001], [1.0, 9.0], [10000])])
    np.testing.assert_array_equal(edge.mean, [1.0, 9.0])


def test_iteration_axis():
    run = fake_log([1024, 1024, 2048, 3072], [1.0, 3.0, 5.0, 7.0], [1024, 2048, 3072])
    curve = aggregate([run], axis="iterations")
    np.testing.assert_array_equal(curve.x, [1, 2, 3])
    np.testing.assert_array_equal(curve.mean, [2.0, 5.0, 7.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_aggregate_invariants(n_seeds, seed):
    rng = np.random.default_rng(seed)
    runs = []
    for _ in range(n_seeds):
        k = int(rng.integers(1, 60))
        steps = np.sort(rng.integers(1, 100_000, size=k))
        runs.append(fake_log(steps, rng.normal(size=k) * 100, [100_000]))
    curve = aggregate(runs, sigma=5)
    perm = rng.permutation(n_seeds)
    other = aggregate([runs[i] for i in perm], sigma=5)
    for a, b in [(curve.mean, other.mean), (curve.ci_halfwidth, other.ci_halfwidth),
                 (curve.mean_smoothed, other.mean_smoothed)]:
        np.testing.assert_array_equal(a, b)
    assert curve.episode_counts.sum() == sum(len(r) for r in runs)
    assert np.all(curve.ci_halfwidth >= 0)
    assert np.all(curve.n_seeds == n_seeds)


def test_smoothing_properties():
    np.testing.assert_allclose(smooth(np.full(50, 3.5)), 3.5, rtol=0, atol=1e-12)
    k = gaussian_kernel(5.0)
    assert len(k) == 41 and k.sum() == pytest.approx(1.0, abs=1e-15)
    impulse = np.zeros(101)
    impulse[50] = 1.0
    np.testing.assert_allclose(smooth(impulse)[30:71], k, atol=1e-15)
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    y = rng.normal(size=200)
    np.testing.assert_allclose(smooth(2 * x + 3 * y), 2 * smooth(x) + 3 * smooth(y), atol=1e-12)
    # interior mass is preserved away from the edges
    assert smooth(impulse).sum() == pytest.approx(1.0, abs=1e-12)


def test_smoothing_matches_scipy():
    ndimage = pytest.importorskip("scipy.ndimage")
    rng = np.random.default_rng(1)
    for n in (1, 7, 30, 300):
        x = rng.normal(size=n)
        for sigma in (1.0, 2.5, 5.0):
            ref = ndimage.gaussian_filter1d(x, sigma, mode="reflect", truncate=4.0)
            np.testing.assert_allclose(smooth(x, sigma), ref, atol=1e-12)


def test_curve_csv_round_trip(tmp_path):
    runs = [fake_log([1000, 6000, 14000], [1.0, 2.5, 1 / 3]), fake_log([2000, 9000], [4.0, 0.1])]
    curve = aggregate(runs, sigma=5)
    path = export_csv(curve, tmp_path / "c.csv")
    assert path.read_text().splitlines()[0] == ",".join(CURVE_COLUMNS)
    back = read_curve_csv(path)
    assert len(back) == 6
    np.testing.assert_array_equal(back["mean_return"], curve.mean)
    np.testing.assert_array_equal(back["ci_halfwidth_smoothed"], curve.ci_halfwidth_smoothed)
    np.testing.assert_array_equal(back["bin_step"], curve.x)

    raw = aggregate(runs)
    assert np.isnan(read_curve_csv(export_csv(raw, tmp_path / "r.csv"))["mean_smoothed"]).all()

    # a run with no completed episodes gives a header-only file
    empty = aggregate([RunLog()])
    assert len(empty) == 0
    assert export_csv(empty, tmp_path / "e.csv").read_text() == ",".join(CURVE_COLUMNS) + "\n"
    assert len(read_curve_csv(tmp_path / "e.csv")["bin_step"]) == 0


def test_logs_csv(tmp_path):
    path = export_logs_csv({1: fake_log([5], [2.0]), 0: fake_log([3, 4], [1.0, 0.5])}, tmp_path / "l.csv")
    lines = path.read_text().splitlines()
    assert lines == ["seed,global_step,episode_return,episode_length", "0,3,1,10", "0,4,0.5,10", "1,5,2,10"]


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError):
        aggregate([fake_log([1], [1.0])], axis="time")
