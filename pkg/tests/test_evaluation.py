import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_coverage

from graspbin.binning import BinGrid, BinLabel, label_of_vector
from graspbin.data.curate import curate, make_objects
from graspbin.evaluation import evaluate as evaluate_mod
from graspbin.evaluation.coverage import (
    CoverageConfig,
    Trial,
    cover_matrix,
    coverage_rate,
    covers,
    filter_to_bins,
    ground_truth_subsets,
    relevant_ground_truth,
    success_over_coverage,
)
from graspbin.evaluation.evaluate import BinPolicy, evaluate_model
from graspbin.geometry import GraspPose, Quaternion, approaches_of, axis_angle_to_quat, random_quats
from graspbin.learning.networks import CvaeConfig, DiscriminatorConfig
from graspbin.learning.train import TrainConfig, new_cvae, new_discriminator


def tilted(angle, translation=(0.0, 0.0, 0.0)):
    return GraspPose(Quaternion.from_array(axis_angle_to_quat([1, 0, 0], angle)), list(translation))


def random_grasps(rng, n, spread=0.03):
    return np.concatenate([random_quats(rng, n), rng.normal(scale=spread, size=(n, 3))], axis=1)


# ------------------------------------------------------------------ covers

def test_covers_reflexive():
    g = tilted(0.3, (0.1, 0.2, 0.3))
    assert covers(g, g)


def test_covers_angle_boundary():
    ref = tilted(0.0)
    assert covers(tilted(math.radians(10.0) * (1 - 1e-9)), ref)
    assert not covers(tilted(math.radians(10.0) * (1 + 1e-9)), ref)
    assert not covers(tilted(math.radians(15.0)), ref)


def test_covers_distance_boundary():
    ref = tilted(0.0)
    assert covers(tilted(0.0, (0.019, 0, 0)), ref)
    assert not covers(tilted(0.0, (0.021, 0, 0)), ref)
    assert covers(tilted(0.0, (0.02 * (1 - 1e-9), 0, 0)), ref)
    assert not covers(tilted(0.0, (0.02 * (1 + 1e-9), 0, 0)), ref)


def test_covers_ignores_roll():
    spun = GraspPose(Quaternion.from_array(axis_angle_to_quat([0, 0, 1], 2.0)), [0, 0, 0])
    assert covers(spun, tilted(0.0))


def test_coverage_config_validation():
    with pytest.raises(ValueError):
        CoverageConfig(grid=BinGrid(4, 8))
    with pytest.raises(ValueError):
        CoverageConfig(distance=0.0)
    assert CoverageConfig().grid.size == 128


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_covers_symmetric(seed):
    rng = np.random.default_rng(seed)
    g = random_grasps(rng, 2, spread=0.01)
    assert covers(GraspPose.from_array(g[0]), GraspPose.from_array(g[1])) == \
        covers(GraspPose.from_array(g[1]), GraspPose.from_array(g[0]))


# ----------------------------------------------------------- coverage rate

def test_coverage_rate_matches_brute_force():
    rng = np.random.default_rng(0)
    grid = BinGrid(1, 1)
    for _ in range(50):
        gt = random_grasps(rng, int(rng.integers(1, 40)))
        gen = np.concatenate([gt[rng.random(len(gt)) < 0.5], random_grasps(rng, int(rng.integers(0, 40)))])
        gen[:, 4:] += rng.normal(scale=0.01, size=(len(gen), 3))
        subsets = ground_truth_subsets(gt)
        got = coverage_rate(gen, subsets, grid, BinLabel(0, 0))
        assert got == brute_force_coverage(gen, gt)


def test_coverage_rate_spot_values():
    rng = np.random.default_rng(1)
    grid = BinGrid(1, 1)
    gt = random_grasps(rng, 20, spread=1.0)
    subsets = ground_truth_subsets(gt)
    assert coverage_rate(gt, subsets, grid, BinLabel(0, 0)) == 1.0
    assert coverage_rate(np.zeros((0, 7)), subsets, grid, BinLabel(0, 0)) == 0.0
    assert coverage_rate(gt[::2], subsets, grid, BinLabel(0, 0)) == 0.5
    assert math.isnan(coverage_rate(gt, {}, grid, BinLabel(0, 0)))


def test_relevant_ground_truth_respects_active_bin():
    rng = np.random.default_rng(2)
    gt = random_grasps(rng, 300)
    grid = BinGrid(4, 8)
    label = BinLabel(1, 2)
    rel = relevant_ground_truth(ground_truth_subsets(gt), grid, label)
    expected = [g for g in gt if label_of_vector(grid, approaches_of(g[None, :4])[0]) == label]
    assert len(rel) == len(expected) > 0


# -------------------------------------------------------------- filtering

def test_filter_to_bins():
    rng = np.random.default_rng(3)
    grid = BinGrid(4, 8)
    g = random_grasps(rng, 200)
    assert filter_to_bins(g, grid, list(grid.labels())).all()
    assert not filter_to_bins(g, grid, []).any()
    allowed = {BinLabel(1, 1), BinLabel(2, 5)}
    mask = filter_to_bins(g, grid, allowed)
    expected = [label_of_vector(grid, a) in allowed for a in approaches_of(g[:, :4])]
    assert mask.tolist() == expected


# ----------------------------------------------------- success over coverage

def make_trials(rng, n_trials=3, n_gen=30, n_gt=20):
    trials = []
    for _ in range(n_trials):
        gt = random_grasps(rng, n_gt)
        gen = random_grasps(rng, n_gen)
        gen[: n_gen // 2] = gt[rng.integers(0, n_gt, n_gen // 2)]
        scores = np.round(rng.random(n_gen), 1)  # coarse rounding creates ties
        ok = rng.random(n_gen) < 0.5
        trials.append(Trial(scores, ok, cover_matrix(gen, gt), n_gt))
    return trials


def brute_force_curve(trials):
    thresholds = sorted({float(s) for t in trials for s in t.scores}, reverse=True)
    total = sum(t.n_ground_truth for t in trials)
    xs, ys = [], []
    for th in thresholds:
        covered = kept = good = 0
        for t in trials:
            keep = t.scores >= th
            covered += int(t.covered_by[keep].any(axis=0).sum())
            kept += int(keep.sum())
            good += int(t.success[keep].sum())
        xs.append(covered / total)
        ys.append(good / kept)
    return [0.0] + xs, [ys[0]] + ys


def test_curve_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(10):
        trials = make_trials(rng)
        curve = success_over_coverage(trials)
        xs, ys = brute_force_curve(trials)
        assert curve.coverage == pytest.approx(xs, abs=1e-15)
        assert curve.success == pytest.approx(ys, abs=1e-15)
        assert curve.auc == pytest.approx(np.trapezoid(ys, xs), abs=1e-12)


def test_curve_invariant_to_monotone_rescaling():
    rng = np.random.default_rng(5)
    trials = make_trials(rng)
    base = success_over_coverage(trials)
    rescaled = [Trial(np.exp(3 * t.scores) + 2, t.success, t.covered_by, t.n_ground_truth) for t in trials]
    other = success_over_coverage(rescaled)
    assert (other.coverage, other.success, other.auc) == (base.coverage, base.success, base.auc)


def test_all_successful_gives_auc_equal_max_coverage():
    rng = np.random.default_rng(6)
    trials = [Trial(t.scores, np.ones_like(t.success), t.covered_by, t.n_ground_truth) for t in make_trials(rng)]
    curve = success_over_coverage(trials)
    assert set(curve.success) == {1.0}
    assert curve.auc == pytest.approx(curve.max_coverage, abs=1e-15)


def test_curve_is_monotone_and_bounded():
    rng = np.random.default_rng(7)
    curve = success_over_coverage(make_trials(rng))
    assert np.all(np.diff(curve.coverage) >= 0)
    assert 0.0 <= curve.auc <= 1.0


def test_uncorrelated_scores_give_base_rate():
    rng = np.random.default_rng(8)
    trials = make_trials(rng, n_trials=20, n_gen=200)
    trials = [Trial(rng.random(len(t.scores)), t.success, t.covered_by, t.n_ground_truth) for t in trials]
    base = np.mean(np.concatenate([t.success for t in trials]))
    curve = success_over_coverage(trials)
    # skip the first few thresholds where only a handful of grasps are kept
    assert np.all(np.abs(np.array(curve.success[50:]) - base) < 0.1)


def test_empty_curve():
    assert success_over_coverage([]).auc == 0.0


# ---------------------------------------------------------------- evaluate

def test_policy_parse():
    assert BinPolicy.parse("fixed=1,2") == BinPolicy("fixed", BinLabel(1, 2))
    assert str(BinPolicy.parse("pc")) == "pc"
    with pytest.raises(ValueError):
        BinPolicy.parse("nearest")


@pytest.fixture(scope="module")
def eval_setup():
    shard = curate(make_objects(2, seed=9), BinGrid(4, 8), cams_per_object=2, grasps_per_object=20,
                   seed=9, split="eval")
    small = dict(hidden=(8, 16), global_width=16, head_width=16, n_points=32)
    cvae = new_cvae(CvaeConfig(**small), TrainConfig())
    disc = new_discriminator(DiscriminatorConfig(**small), TrainConfig())
    return shard, cvae, disc


def test_evaluate_report_structure(eval_setup):
    shard, cvae, disc = eval_setup
    report = evaluate_model(cvae, disc, shard, BinPolicy.parse("random"), grasps=20, exec_k=5, seed=1)
    assert report.trials == len(shard.clouds)
    assert 0 <= report.success_rate <= 1 and 0 <= report.ratio_kept <= 1
    assert np.all(np.diff(report.curve["coverage"]) >= 0)
    doc = json.loads(report.to_json())
    assert doc["policy"] == "random" and "per_bin" in doc
    assert report.curve_csv().startswith("coverage,success\n")
    again = evaluate_model(cvae, disc, shard, BinPolicy.parse("random"), grasps=20, exec_k=5, seed=1)
    assert again.to_json() == report.to_json()


def test_all_policy_runs_each_occupied_bin(eval_setup):
    shard, cvae, disc = eval_setup
    report = evaluate_model(cvae, disc, shard, BinPolicy("all"), grasps=4, exec_k=2)
    expected = 0
    for ci in range(len(shard.clouds)):
        r = shard.records_for_cloud(ci)
        expected += len({tuple(b) for b in r["bin"][r["success"] == 1].tolist()})
    assert report.trials == expected


def test_empty_filtered_set_fails_trial(eval_setup, monkeypatch):
    shard, cvae, disc = eval_setup
    straight_up = np.tile([1.0, 0, 0, 0, 0, 0, 0.5], (10, 1))  # approach +z lands in bin (0, 0)
    monkeypatch.setattr(evaluate_mod, "sample_grasp_array", lambda *a, **k: straight_up.copy())
    report = evaluate_model(cvae, disc, shard, BinPolicy("fixed", BinLabel(3, 3)), grasps=10, exec_k=5)
    assert report.trials == len(shard.clouds)
    assert report.success_rate == 0.0 and report.ratio_kept == 0.0


def test_pc_policy_falls_back_on_degenerate_cloud(eval_setup, monkeypatch):
    shard, cvae, disc = eval_setup
    from graspbin.pointcloud import DegenerateCloudError

    def boom(cloud, grid):
        raise DegenerateCloudError("flat", None)

    monkeypatch.setattr(evaluate_mod, "select_pc_bins", boom)
    report = evaluate_model(cvae, disc, shard, BinPolicy("pc"), grasps=4, exec_k=2)
    assert report.fallbacks == len(shard.clouds)
