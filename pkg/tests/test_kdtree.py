import math

import numpy as np
import pytest

from mdrq import Counters, DimensionMismatch, KdTree, KernelMode, MatchKernel, RangeQuery, oracle_ids
from mdrq.kdtree import NIL


def _line(values):
    tree = KdTree(1)
    for v in values:
        tree.insert([v], v)
    return tree


def test_first_insert_is_root():
    tree = _line([5])
    root = tree.node(0)
    assert root.object_id == 5
    assert root.delimiter_dim == 0
    assert root.left is None and root.right is None


def test_round_robin_delimiters():
    tree = KdTree(3)
    for i, obj in enumerate([[0.5, 0.5, 0.5], [0.4, 0.5, 0.5], [0.3, 0.4, 0.5], [0.2, 0.3, 0.4]]):
        tree.insert(obj, i)
    assert [tree.node(i).delimiter_dim for i in range(4)] == [0, 1, 2, 0]
    assert tree.max_depth == 4


def test_equal_values_go_left():
    tree = _line([3, 3])
    assert tree.node(0).left == 1
    assert tree.node(0).right is None


@pytest.mark.parametrize("mode", list(KernelMode))
def test_balanced_line_traversal(mode):
    tree = _line([4, 2, 6, 1, 3, 5, 7])
    counters = Counters()
    result = tree.search(RangeQuery([6], [7]), MatchKernel(mode), counters)
    assert list(result) == [6, 7]
    # root, right child, and both of its children
    assert counters.nodes_visited == 4


def test_point_query(small):
    tree = KdTree.build(small.values, np.arange(small.n))
    obj = small.values[17]
    assert 17 in tree.search(RangeQuery(obj, obj))
    assert tree.search(RangeQuery(obj, obj)) == oracle_ids(small, RangeQuery(obj, obj))


def test_full_domain_visits_every_node(small):
    tree = KdTree.build(small.values, np.arange(small.n))
    counters = Counters()
    assert list(tree.search(RangeQuery.full(small.m), counters=counters)) == list(range(small.n))
    assert counters.nodes_visited == small.n


def test_insert_after_search():
    tree = _line([4, 2, 6])
    assert list(tree.search(RangeQuery([5], [9]))) == [6]
    assert tree.id_array() is tree.id_array()
    tree.insert([8], 80)
    assert list(tree.search(RangeQuery([5], [9]))) == [6, 80]
    assert tree.id_array().tolist() == [4, 2, 6, 80]


def test_empty_tree():
    tree = KdTree.build(np.empty((0, 2), dtype=np.float32), np.empty(0, dtype=np.int64))
    assert len(tree) == 0
    assert len(tree.search(RangeQuery.full(2))) == 0
    assert tree.audit() == []


@pytest.mark.parametrize("mode", list(KernelMode))
def test_matches_oracle(mode, uniform, queries):
    tree = KdTree.build(uniform.values, np.arange(uniform.n), seed=11)
    kernel = MatchKernel(mode)
    for query in queries:
        assert tree.search(query, kernel) == oracle_ids(uniform, query)


def test_partial_match(uniform):
    tree = KdTree.build(uniform.values, np.arange(uniform.n))
    query = RangeQuery.of([None, 0.4, None, None, 0.1], [None, 0.45, None, None, 0.2])
    assert tree.search(query) == oracle_ids(uniform, query)


def test_structure(uniform):
    tree = KdTree.build(uniform.values, np.arange(uniform.n), seed=5)
    assert len(tree) == uniform.n
    assert tree.audit() == []
    assert tree.max_depth < 10 * math.log2(uniform.n)


def test_audit_detects_corruption(small):
    tree = KdTree.build(small.values, np.arange(small.n))
    d = tree.dims[0]
    if tree.left[0] != NIL:
        tree.rows[tree.left[0]][d] = tree.rows[0][d] + 1.0
    else:
        tree.rows[tree.right[0]][d] = tree.rows[0][d] - 1.0
    assert tree.audit()


def test_dimension_mismatch():
    tree = KdTree(2)
    with pytest.raises(DimensionMismatch):
        tree.insert([0.1, 0.2, 0.3], 0)
    tree.insert([0.1, 0.2], 0)
    with pytest.raises(DimensionMismatch):
        tree.search(RangeQuery.full(3))
