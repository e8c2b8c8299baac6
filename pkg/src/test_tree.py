import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tree as tree_tools
import wilson
from lattice import RngSeed
from tree import full_binary_tree, line_tree

# Star with a tail, rooted at 0:
#
#        0
#      / | \
#     1  2  3
#     |
#     4
#     |
#     5
FORK = tree_tools.from_parents([0, 0, 0, 0, 1, 4])


@pytest.fixture(scope="module")
def box_tree():
    return wilson.wired_box_ust(3, 6, RngSeed(21))


def test_fixture_builders():
    line = line_tree(4, d=2, center=2)
    assert line.root == 0
    assert line.coords[:, 0].tolist() == [-2, -1, 0, 1, 2]
    assert line.origin == 2
    binary = full_binary_tree(3)
    assert binary.n_vertices == 15
    assert binary.children(0).tolist() == [1, 2]
    random = tree_tools.random_tree(30, np.random.default_rng(0))
    assert random.validate()
    assert np.all(random.parent[1:] < np.arange(1, 30))
    with pytest.raises(ValueError):
        tree_tools.from_parents([1, 0])


def test_ball_levels_by_hand():
    """
    Around vertex 1 of FORK: distance 1 holds 0 and 4, distance 2 holds the
    siblings 2, 3 and vertex 5, and nothing is at distance 3.
    """
    b = tree_tools.ball(FORK, 1, 3)
    assert [sorted(level.tolist()) for level in b.levels] == [[1], [0, 4], [2, 3, 5], []]
    assert b.volume == 6
    assert b.volumes().tolist() == [1, 3, 6, 6]
    assert b.sphere.size == 0
    assert not b.hits_wired_boundary
    frame = tree_tools.ball_frame(FORK, b)
    assert sorted(frame["vertex"]) == [0, 1, 2, 3, 4, 5]
    with pytest.raises(ValueError):
        tree_tools.ball(FORK, 9, 1)


def test_ball_stops_at_the_wired_boundary(box_tree):
    b = tree_tools.ball(box_tree, box_tree.origin, 400)
    assert b.hits_wired_boundary
    assert box_tree.supernode not in b.vertices
    with pytest.raises(ValueError):
        tree_tools.ball(box_tree, box_tree.supernode, 1)


def test_past_and_future():
    assert tree_tools.past(FORK, 1).tolist() == [1, 4, 5]
    assert tree_tools.past(FORK, 1, 1).tolist() == [1, 4]
    assert tree_tools.past_reaches(FORK, 1, 2)
    assert not tree_tools.past_reaches(FORK, 1, 3)
    with pytest.raises(ValueError):
        tree_tools.past(FORK, 0)

    fm = tree_tools.future_and_meet(FORK, 5, 3)
    assert fm.path_u == [5, 4, 1, 0]
    assert fm.path_v == [3, 0]
    assert fm.meet == 0
    assert tree_tools.tree_distance(FORK, 5, 3) == 4
    assert tree_tools.tree_distance(FORK, 5, 1) == 2
    assert tree_tools.tree_distance(FORK, 2, 2) == 0


def test_tree_distance_through_supernode_is_infinite(box_tree):
    s = box_tree.supernode
    roots = [v for v in box_tree.children(s).tolist()]
    assert len(roots) >= 2
    assert math.isinf(tree_tools.tree_distance(box_tree, roots[0], roots[1]))
    assert tree_tools.tree_distance(box_tree, roots[0], s) == 1


def test_resistance_line_and_binary():
    """A line is n unit resistors in series; a binary tree of depth n gives
    sum_{j=1..n} 2^{-j} = 1 - 2^{-n}."""
    line = line_tree(50)
    for n in (1, 7, 50):
        assert tree_tools.resistance_to_sphere(line, 0, n) == n
    assert tree_tools.resistance_to_sphere(line_tree(10, center=5), 5, 3) == pytest.approx(1.5)
    for depth in (1, 4, 8):
        assert tree_tools.resistance_to_sphere(full_binary_tree(depth), 0, depth) == pytest.approx(
            1 - 2.0**-depth
        )
    assert tree_tools.resistance_to_sphere(full_binary_tree(5), 0, 5, exact=True) == Fraction(31, 32)


def test_resistance_by_hand():
    """
    From vertex 1 of FORK to its sphere of radius 2 = {2, 3, 5}:
    the branch through 0 is 1 + (1 || 1) = 1.5, the branch through 4 is 2,
    and in parallel 1.5 * 2 / 3.5 = 6/7.
    """
    assert tree_tools.resistance_to_sphere(FORK, 1, 2, exact=True) == Fraction(6, 7)
    assert tree_tools.resistance_to_sphere(FORK, 1, 2) == pytest.approx(6 / 7)
    assert tree_tools.resistance_to_sphere_linear(FORK, 1, 2) == pytest.approx(6 / 7)
    with pytest.raises(ValueError):
        tree_tools.resistance_to_sphere(FORK, 1, 3)


def test_dead_ends_carry_no_current():
    """Vertex 3 of FORK is a leaf: seen from 0 at radius 3 only the tail counts."""
    assert tree_tools.resistance_to_sphere(FORK, 0, 3) == pytest.approx(3.0)
    assert tree_tools.resistance_to_sphere(FORK, 0, 3, exact=True) == 3


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_resistance_agrees_with_harmonic_system(size, seed, n):
    rng = np.random.default_rng(seed)
    fixture = tree_tools.random_tree(size, rng)
    v = int(rng.integers(0, size))
    if tree_tools.ball(fixture, v, n).sphere.size == 0:
        return
    fast = tree_tools.resistance_to_sphere(fixture, v, n)
    exact = tree_tools.resistance_to_sphere(fixture, v, n, exact=True)
    slow = tree_tools.resistance_to_sphere_linear(fixture, v, n)
    assert fast == pytest.approx(float(exact), rel=1e-12)
    assert slow == pytest.approx(float(exact), rel=1e-8)


def test_geodesic_counts_by_hand():
    """
    From 1 at radius 2 every sphere vertex {2, 3, 5} is reached through 0 or 4,
    so N(2, 1) = 2 and N(2, 2) = 3.
    """
    assert tree_tools.geodesic_counts(FORK, 1, 2).tolist() == [2, 3]
    # from 0 at radius 3 only the tail through 1 survives
    assert tree_tools.geodesic_counts(FORK, 0, 3).tolist() == [1, 1, 1]
    table = tree_tools.geodesic_table(FORK, 1, 2)
    assert table["N"].tolist() == [2, 3]
    assert table["resistance"].iloc[0] == pytest.approx(6 / 7)


def test_geodesic_inequality_on_sampled_tree(box_tree):
    o = box_tree.origin
    for n in range(1, 8):
        if tree_tools.ball(box_tree, o, n).sphere.size == 0:
            break
        R = tree_tools.resistance_to_sphere(box_tree, o, n, exact=True)
        counts = tree_tools.geodesic_counts(box_tree, o, n)
        assert R <= n
        assert all(k / Fraction(int(counts[k - 1])) <= R for k in range(1, n + 1))


def test_omega_r_and_weighted_distance():
    """
    Heights in FORK: 0 -> 3, 1 -> 2, 4 -> 1 and the leaves 0. omega_2 is
    therefore 1 on {0, 1} only. On 5 - 4 - 1 - 0 - 3 the edge costs are
    0, 1/2, 1, 1/2.
    """
    omega = tree_tools.omega_r(FORK, 2)
    assert omega.values.tolist() == [1, 1, 0, 0, 0, 0]
    assert tree_tools.weighted_distance(FORK, omega, 5, 3) == 2.0
    ones = tree_tools.VertexWeighting.constant(FORK, 1)
    assert tree_tools.weighted_distance(FORK, ones, 5, 3) == tree_tools.tree_distance(FORK, 5, 3)
    assert omega(0) == 1.0
    with pytest.raises(ValueError):
        tree_tools.VertexWeighting([1.0, -1.0])
    with pytest.raises(ValueError):
        tree_tools.omega_r(FORK, 0)


def test_weighted_metric_inequality_on_sampled_tree(box_tree):
    rng = np.random.default_rng(0)
    n_lattice = box_tree.coords.shape[0]
    for r in (1, 2, 4):
        omega = tree_tools.omega_r(box_tree, r)
        assert omega(box_tree.supernode) == 0.0
        for _ in range(200):
            u, v = (int(x) for x in rng.integers(0, n_lattice, size=2))
            d = tree_tools.tree_distance(box_tree, u, v)
            if math.isinf(d):
                assert math.isinf(tree_tools.weighted_distance(box_tree, omega, u, v))
                continue
            assert d <= 4 * r + 4 * tree_tools.weighted_distance(box_tree, omega, u, v)


def test_extrinsic_stats():
    """line_tree(6, center=3) sits on -3..3; B(3, 2) covers -2..2 around the origin."""
    line = line_tree(6, d=2, center=3)
    stats = tree_tools.extrinsic_stats(line, 3, 2)
    assert stats == (2, 2)
    stats = tree_tools.extrinsic_stats(line, 5, 1)
    assert stats.max_displacement == 1
    assert stats.containment_radius == 3
    with pytest.raises(ValueError):
        tree_tools.extrinsic_stats(FORK, 0, 1)


def test_extrinsic_volume():
    line = line_tree(10, center=5)
    assert tree_tools.extrinsic_volume(line, 5, 0) == 1
    assert tree_tools.extrinsic_volume(line, 5, 3) == 7
    assert tree_tools.extrinsic_volume(line, 0, 3) == 4


def test_extrinsic_volume_is_monotone(box_tree):
    o = box_tree.origin
    volumes = [tree_tools.extrinsic_volume(box_tree, o, r) for r in range(7)]
    assert volumes[0] == 1
    assert all(a <= b for a, b in zip(volumes, volumes[1:]))
    assert volumes[-1] <= 13**3


def test_m_set_length_threshold():
    """r = 4: 16 / (log 4)^{1/3} = 16 / 1.1152 = 14.35, floored to 14."""
    assert tree_tools.m_set_length_threshold(4) == 14
    with pytest.raises(ValueError):
        tree_tools.m_set_length_threshold(2)


def test_extract_M_set_on_line():
    """
    On line_tree(40, center=20) rooted at the left end, the origin's future is
    every point at or left of it. With x = origin and r = 3 the box is [-9, 9]
    and paths may have at most floor(9 / (log 3)^{1/3}) = floor(8.72) = 8
    steps. Points left of the origin are already on its future; a point at
    x > 0 needs x steps, so x = 9 is too far and 18 points qualify.
    """
    line = line_tree(40, center=20)
    o = line.origin
    everything = tree_tools.extract_M_set(line, o, 3, 0.5, lambda path, alpha: True)
    assert sorted(line.coords[everything, 0].tolist()) == list(range(-9, 9))
    nothing = tree_tools.extract_M_set(line, o, 3, 0.5, lambda path, alpha: False)
    assert nothing.size == 0
    seen = []

    def classifier(path, alpha):
        seen.append((path.start, path.end, path.length))
        return path.length <= 2

    short = tree_tools.extract_M_set(line, o, 3, 0.5, classifier)
    assert sorted(line.coords[short, 0].tolist()) == list(range(-9, 3))
    assert ((2,), (0,), 2) in seen


def test_extract_M_set_needs_paths_inside_the_box():
    """Around x = 12 the box is [3, 21]; every path to the origin's future leaves it."""
    line = line_tree(40, center=20)
    x = line.vertex_at((12,))
    assert tree_tools.extract_M_set(line, x, 3, 0.5, lambda path, alpha: True).size == 0
