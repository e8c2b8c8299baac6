import numpy as np
import pandas as pd
import pytest

import walk_stats
from lattice import RngSeed
from tree import from_parents, line_tree
from walk_stats import EnsembleConfig, WalkRecords
from wilson import SpanningTree

# 0 - 1 - 2 rooted at 0: from the middle every step goes to a leaf and back.
THREE = line_tree(2, center=1)

# Lattice vertices 0..3 with 0 wired to the supernode 4; 1 - 2 hangs off 0 and so does 3.
WIRED_FORK = SpanningTree(parent=np.array([4, 0, 1, 0, 4]), root=4, supernode=4)

LINE_CONFIG = EnsembleConfig(
    d=1, trees=1, walks_per_tree=200, seed=11, surrogate="line", line_length=2000, threads=1
)


def test_walk_from_the_middle_of_three():
    """Starting at 1 the walk is at 1 exactly at even times."""
    summaries = walk_stats.run_walk_checkpoints(THREE, 1, [1, 2, 4], RngSeed(1), keep_trajectory=True)
    one, two, four = summaries
    assert not one.at_start
    assert one.end_distance == 1
    assert two.at_start
    assert two.end_distance == 0
    assert two.max_distance == 1
    assert two.returns == 1
    assert four.returns == 2
    assert four.odd_returns == 0
    assert four.range in (2, 3)
    assert four.repeat_visits == 5 - four.range
    assert four.trajectory.tolist()[::2] == [1, 1, 1]
    assert one.trajectory.size == 2
    assert not four.touched_boundary
    assert "trajectory" not in four.to_dict()


def test_run_walk_is_reproducible():
    line = line_tree(200, center=100)
    a = walk_stats.run_walk(line, 100, 150, RngSeed(2), keep_trajectory=True)
    b = walk_stats.run_walk(line, 100, 150, RngSeed(2), keep_trajectory=True)
    assert np.array_equal(a.trajectory, b.trajectory)
    assert a.end_distance <= a.max_distance <= 150
    assert a.range <= 151
    # on a line the intrinsic and extrinsic displacements coincide
    assert a.max_extrinsic == a.max_distance
    with pytest.raises(ValueError):
        walk_stats.run_walk_checkpoints(line, 100, [], 0)
    with pytest.raises(ValueError):
        walk_stats.run_walk(WIRED_FORK, 4, 3, 0)


def test_walks_ignore_the_supernode():
    walker = walk_stats.TreeWalker(WIRED_FORK)
    assert sorted(walker.neighbors(0)) == [1, 3]
    assert walker.neighbors(2) == [1]
    assert walker.touches_boundary(np.arange(4)).tolist() == [True, False, False, False]


def test_exit_time_by_hand():
    """At n = 1 the first step always exits; distances change parity every step."""
    assert walk_stats.exit_time(THREE, 1, 20, RngSeed(3), start=1).tolist() == [1] * 20
    fork = from_parents([0, 0, 1])
    samples = walk_stats.exit_time(fork, 2, 50, RngSeed(3), start=2)
    assert samples.min() == 2
    assert np.all(samples % 2 == 0)


def test_exit_time_on_a_line():
    """The symmetric walk on Z leaves (-n, n) after n^2 steps on average; for
    n = 4 the variance is 2 (n^4 - n^2) / 3 = 160."""
    line = line_tree(400, center=200)
    samples = walk_stats.exit_time(line, 4, 3000, RngSeed(4))
    se = np.sqrt(160 / samples.size)
    assert abs(samples.mean() - 16) < 5 * se
    assert samples.min() >= 4
    assert np.all(samples % 2 == 0)


def test_exit_time_validation():
    with pytest.raises(ValueError):
        walk_stats.exit_time(THREE, 0, 5, 0)
    with pytest.raises(ValueError):
        walk_stats.exit_time(THREE, 2, 5, 0, start=1)
    with pytest.raises(walk_stats.BoundaryEffectError):
        walk_stats.exit_time(WIRED_FORK, 3, 5, 0, start=2)


def test_ensemble_config():
    assert LINE_CONFIG.n_trees == 1
    tree, start = LINE_CONFIG.sample_tree(0)
    assert tree.n_vertices == 2001
    assert start == 1000
    assert tree.coords[start].tolist() == [0]
    assert LINE_CONFIG.config_hash() == EnsembleConfig(**vars(LINE_CONFIG)).config_hash()
    with pytest.raises(ValueError):
        EnsembleConfig(surrogate="cube")
    with pytest.raises(ValueError):
        EnsembleConfig(trees=0)


def test_ensemble_on_the_line():
    records = walk_stats.ensemble_walks(LINE_CONFIG, [2, 16])
    frame = records.frame
    assert sorted(frame["steps"].unique()) == [0, 2, 16]
    assert len(frame) == 3 * 200
    assert records.discarded == 0
    assert records.discard_rate == 0
    assert not frame["boundary_flag"].any()
    assert (frame["max_extrinsic"] == frame["max_distance"]).all()

    # P(X_2 = X_0) = 1/2 on Z
    p2 = walk_stats.return_probability(LINE_CONFIG, 2, records)
    assert abs(p2.estimate - 0.5) < 4 * np.sqrt(0.25 / 200)
    assert p2.ci_low <= p2.estimate <= p2.ci_high
    assert p2.trees == 1
    assert np.isnan(p2.between_tree_var)

    profile = walk_stats.displacement_profile(LINE_CONFIG, [2, 16], records)
    assert [e.statistic for e in profile[::2]] == list(walk_stats.DISPLACEMENT_STATISTICS)
    ranges = walk_stats.range_profile(LINE_CONFIG, [2, 16], records)
    assert 2.0 <= ranges[0].estimate <= 3.0
    frame = walk_stats.estimates_frame(profile + ranges)
    assert len(frame) == 10
    assert {"statistic", "n", "estimate", "ci_low", "ci_high"} <= set(frame.columns)


def test_return_probability_validation():
    with pytest.raises(ValueError):
        walk_stats.return_probability(LINE_CONFIG, 3)
    assert walk_stats.return_probability(LINE_CONFIG, 0).estimate == 1.0


def test_exit_time_profile_on_the_line():
    cfg = EnsembleConfig(d=1, trees=1, seed=12, surrogate="line", line_length=400, threads=1)
    (one, four) = walk_stats.exit_time_profile(cfg, [1, 4], 400)
    assert one.estimate == 1.0
    assert abs(four.estimate - 16) < 5 * np.sqrt(160 / 400)
    assert four.walks_per_tree == 400


def test_aggregate_across_trees():
    """Per-tree means 2 and 5 give an across-tree mean of 3.5."""
    frame = pd.DataFrame(
        {
            "steps": [4] * 5,
            "tree": [0, 0, 1, 1, 1],
            "walk": [0, 1, 0, 1, 2],
            "value": [1.0, 3.0, 4.0, 5.0, 6.0],
        }
    )
    records = WalkRecords(frame, 1, EnsembleConfig(trees=2, walks_per_tree=2))
    est = walk_stats.aggregate(records, "value", 4, "value")
    assert est.estimate == 3.5
    assert est.trees == 2
    assert est.between_tree_var == pytest.approx(4.5)
    # within-tree variances 2 and 1
    assert est.within_tree_var == pytest.approx(1.5)
    assert est.ci_low < 3.5 < est.ci_high
    assert records.discard_rate == pytest.approx(1 / 5)
    median = walk_stats.aggregate(records, "value", 4, "value", reducer="median")
    assert median.estimate == 3.5
    with pytest.raises(ValueError):
        walk_stats.aggregate(records, "value", 8, "value")


def test_pooled_quantiles_weight_trees_equally():
    """
    Tree 0 has one walk (value 10, weight 1), tree 1 three walks (1, 2, 3,
    weight 1/3 each). The weighted midpoints are 1/12, 1/4, 5/12, 3/4, so the
    median lies a quarter of the way from 3 to 10: 4.75.
    """
    frame = pd.DataFrame(
        {"steps": [8] * 4, "tree": [0, 1, 1, 1], "walk": [0, 0, 1, 2], "range": [10, 1, 2, 3]}
    )
    records = WalkRecords(frame, 0, EnsembleConfig(trees=2, walks_per_tree=3))
    (median,) = walk_stats.pooled_quantiles(records, 8, "range", quantiles=[0.5])
    assert median == pytest.approx(4.75)
    with pytest.raises(ValueError):
        walk_stats.pooled_quantiles(records, 2, "range")


def test_walks_stuck_at_the_boundary_are_left_out():
    """
    From 0 every walk starts next to the wired boundary, so all attempts are
    discarded and there is nothing left to estimate.
    """
    cfg = EnsembleConfig(trees=1, walks_per_tree=4, seed=5, max_redraws=2, threads=1)
    rows, discarded = walk_stats.tree_walk_records(cfg, 0, [0, 2], sampled=WIRED_FORK, start=0)
    assert discarded == 4 * 3
    records = WalkRecords(pd.DataFrame(rows), discarded, cfg)
    assert records.frame["boundary_flag"].all()
    assert records.kept_walks == 0
    assert records.discard_rate == 1.0
    with pytest.raises(walk_stats.BoundaryEffectError):
        walk_stats.aggregate(records, "range", 2, "range")
    with pytest.raises(walk_stats.BoundaryEffectError):
        walk_stats.pooled_quantiles(records, 2, "range")


def test_flagged_walks_do_not_enter_estimates():
    """
    From 2 the walk is at 1 after one step and then at 0 (boundary) or back
    at 2 with probability 1/2 each. Without redraws the flagged walks are
    exactly those that did not return, so the clean return probability is 1.
    """
    cfg = EnsembleConfig(trees=1, walks_per_tree=40, seed=6, max_redraws=0, threads=1)
    rows, discarded = walk_stats.tree_walk_records(cfg, 0, [0, 2], sampled=WIRED_FORK, start=2)
    records = WalkRecords(pd.DataFrame(rows), discarded, cfg)
    frame = records.frame
    assert len(frame) == 2 * 40
    flagged = frame.loc[frame["steps"] == 2, "boundary_flag"]
    assert discarded == flagged.sum()
    assert 0 < discarded < 40
    assert records.kept_walks == 40 - discarded
    assert records.discard_rate == pytest.approx(discarded / 40)
    est = walk_stats.aggregate(records, "return_probability", 2, "at_start")
    assert est.estimate == 1.0
    (median,) = walk_stats.pooled_quantiles(records, 2, "range", quantiles=[0.5])
    assert median == 2.0


def test_exit_time_profile_samples_each_tree_once(monkeypatch):
    calls = []
    original = EnsembleConfig.sample_tree

    def counting(self, index):
        calls.append(index)
        return original(self, index)

    monkeypatch.setattr(EnsembleConfig, "sample_tree", counting)
    cfg = EnsembleConfig(d=1, trees=1, seed=13, surrogate="line", line_length=200, threads=1)
    estimates = walk_stats.exit_time_profile(cfg, [1, 2, 4], 20)
    assert [e.n for e in estimates] == [1, 2, 4]
    assert calls == [0]
