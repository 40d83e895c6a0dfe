import math

import numpy as np
import pytest

from mdrq import (Counters, DimensionMismatch, KernelMode, MatchKernel, Mbr, RangeQuery, RStarConfig, RStarTree,
                  mbr_intersects, oracle_ids)

UNIT = Mbr(np.array([0, 0], dtype=np.float32), np.array([1, 1], dtype=np.float32))


def test_mbr_disjoint():
    assert not mbr_intersects(UNIT, RangeQuery([2, 0], [3, 1]))


def test_mbr_touching():
    assert mbr_intersects(UNIT, RangeQuery([1, 0], [2, 1]))


def test_mbr_equal():
    assert mbr_intersects(UNIT, RangeQuery([0, 0], [1, 1]))


@pytest.mark.parametrize("m", [1, 8, 9, 20])
def test_mbr_matches_interval_test(m):
    rng = np.random.default_rng(m)
    for _ in range(200):
        a, b = rng.random((2, m), dtype=np.float32)
        c, d = rng.random((2, m), dtype=np.float32)
        box = Mbr(np.minimum(a, b), np.maximum(a, b))
        query = RangeQuery(np.minimum(c, d), np.maximum(c, d))
        expected = bool(((query.lower <= box.high) & (query.upper >= box.low)).all())
        assert mbr_intersects(box, query) == expected
        assert mbr_intersects(box, query, lanes=4) == expected


def test_first_insert():
    tree = RStarTree(2)
    tree.insert([0.3, 0.7], 0)
    assert tree.root.leaf
    assert len(tree.root) == 1
    box = tree.root.mbr()
    assert box.low.tolist() == box.high.tolist()


def test_forced_reinsert_before_split():
    tree = RStarTree(1, RStarConfig(leaf_capacity=4, inner_capacity=4, reinsert_fraction=0.3))
    for i in range(4):
        tree.insert([float(i)], i)
    assert (tree.reinsertions, tree.splits) == (0, 0)
    tree.insert([4.0], 4)
    assert tree.reinsertions == 1
    assert tree.reinserted_entries == math.ceil(0.3 * 5)
    assert tree.splits == 1
    assert tree.audit() == []
    assert list(tree.search(RangeQuery.full(1))) == [0, 1, 2, 3, 4]


def test_no_reinsert_splits_directly():
    tree = RStarTree(1, RStarConfig(leaf_capacity=4, inner_capacity=4, reinsert_fraction=0.0))
    for i in range(5):
        tree.insert([float(i)], i)
    assert (tree.reinsertions, tree.splits) == (0, 1)
    assert tree.root.level == 1


@pytest.mark.parametrize("m", [3, 5])
def test_structure(m):
    rng = np.random.default_rng(m)
    objects = rng.random((3_000, m), dtype=np.float32)
    tree = RStarTree.build(objects, np.arange(3_000), config=RStarConfig(leaf_capacity=16, inner_capacity=16))
    assert tree.audit() == []
    stats = tree.stats()
    assert stats.entries == 3_000
    assert stats.height == tree.root.level + 1 >= 3


def test_default_capacity_structure(uniform):
    tree = RStarTree.build(uniform.values, np.arange(uniform.n))
    assert tree.audit() == []
    assert len(tree) == uniform.n


def test_audit_detects_stale_box():
    objects = np.random.default_rng(0).random((200, 2), dtype=np.float32)
    tree = RStarTree.build(objects, np.arange(200), config=RStarConfig(leaf_capacity=8, inner_capacity=8))
    tree.root.lows[0] -= 1.0
    assert tree.audit()


@pytest.mark.parametrize("mode", list(KernelMode))
def test_matches_oracle(mode, uniform, queries):
    tree = RStarTree.build(uniform.values, np.arange(uniform.n), seed=2)
    kernel = MatchKernel(mode)
    for query in queries[:40]:
        assert tree.search(query, kernel) == oracle_ids(uniform, query)


def test_partial_match(wide):
    tree = RStarTree.build(wide.values, np.arange(wide.n), config=RStarConfig(leaf_capacity=24, inner_capacity=24))
    lower, upper = [None] * 20, [None] * 20
    lower[3], upper[3] = 0.1, 0.3
    lower[12], upper[12] = 0.5, 0.9
    query = RangeQuery.of(lower, upper)
    assert tree.search(query) == oracle_ids(wide, query)


def test_disjoint_query_visits_root_only(small):
    tree = RStarTree.build(small.values, np.arange(small.n), config=RStarConfig(leaf_capacity=8, inner_capacity=8))
    counters = Counters()
    assert len(tree.search(RangeQuery([2, 2, 2], [3, 3, 3]), counters=counters)) == 0
    assert counters.nodes_visited == 1


def test_full_domain_visits_all_nodes(small):
    tree = RStarTree.build(small.values, np.arange(small.n), config=RStarConfig(leaf_capacity=8, inner_capacity=8))
    counters = Counters()
    assert len(tree.search(RangeQuery.full(small.m), counters=counters)) == small.n
    assert counters.nodes_visited == tree.stats().nodes


def test_leaves_visited_lower_bound(uniform, queries):
    tree = RStarTree.build(uniform.values, np.arange(uniform.n))
    for query in queries[:20]:
        counters = Counters()
        result = tree.search(query, counters=counters)
        assert counters.leaves_visited >= math.ceil(len(result) / tree.config.leaf_capacity)


def test_empty_tree():
    tree = RStarTree.build(np.empty((0, 3), dtype=np.float32), np.empty(0, dtype=np.int64))
    assert len(tree) == 0
    assert len(tree.search(RangeQuery.full(3))) == 0
    assert tree.audit() == []


def test_config_validation():
    assert RStarConfig().min_entries(0) == 38
    assert RStarConfig(double_lanes=True).lanes == 4
    with pytest.raises(ValueError):
        RStarConfig(leaf_capacity=1)
    with pytest.raises(ValueError):
        RStarConfig(min_fill=0.6)


def test_dimension_mismatch():
    tree = RStarTree(2)
    with pytest.raises(DimensionMismatch):
        tree.insert([0.1], 0)
    with pytest.raises(DimensionMismatch):
        tree.search(RangeQuery.full(3))
