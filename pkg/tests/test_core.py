import numpy as np
import pytest

from mdrq import (Counters, DataSet, DatasetFormatError, DimensionMismatch, InvalidData, InvalidQuery, KernelMode,
                  MatchKernel, RangeQuery, ResultSet, lane_filter, match_scalar, match_vectorized, oracle_ids,
                  read_dataset, selectivity_oracle, write_dataset)


def test_match_full_domain():
    assert match_scalar([0.5, 0.5], RangeQuery([0, 0], [1, 1]))


def test_match_first_dimension_fails():
    assert not match_scalar([0.5, 0.5], RangeQuery([0.6, 0], [1, 1]))


def test_match_inclusive_boundary():
    assert match_scalar([0.25], RangeQuery([0.25], [0.9]))
    assert match_vectorized([0.25], RangeQuery([0.25], [0.9]))
    assert match_vectorized([0.9], RangeQuery([0.25], [0.9]))


def test_match_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        match_scalar([0.5], RangeQuery([0, 0], [1, 1]))
    with pytest.raises(DimensionMismatch):
        match_vectorized([0.5, 0.5, 0.5], RangeQuery([0, 0], [1, 1]))


def test_vectorized_first_block_fails():
    obj = np.full(20, 0.5)
    obj[3] = 2.0
    query = RangeQuery(np.zeros(20), np.ones(20))
    assert match_vectorized(np.full(20, 0.5), query)
    assert not match_vectorized(obj, query)
    assert not match_scalar(obj, query)


def test_vectorized_remainder_fails():
    obj = np.full(9, 0.5)
    obj[8] = 1.5
    query = RangeQuery(np.zeros(9), np.ones(9))
    assert match_vectorized(obj, query) == match_scalar(obj, query) == False


def test_kernels_compare_at_stored_width():
    # 0.1 as a 64-bit real lies below float32(0.1)
    row = np.array([0.1])
    query = RangeQuery.of([0.1], [0.2])
    assert match_scalar(row, query) == match_vectorized(row, query) == True
    assert match_scalar(row.tolist(), query) == match_vectorized(row.tolist(), query) == True
    assert MatchKernel(KernelMode.SCALAR).select(np.float32(row).reshape(1, 1), query).tolist() == [0]


@pytest.mark.parametrize("m", [1, 7, 8, 9, 20, 100])
def test_kernel_equivalence(m):
    rng = np.random.default_rng(m)
    objects = rng.random((2_000, m), dtype=np.float32)
    a = rng.random((2_000, m), dtype=np.float32)
    b = rng.random((2_000, m), dtype=np.float32)
    # narrow-ish boxes around the objects so that both outcomes occur
    lower = np.minimum(a, b) * 0.2 + objects * 0.8 - 0.05
    upper = np.maximum(a, b) * 0.2 + objects * 0.8 + 0.05
    for obj, lo, hi in zip(objects, lower, upper):
        query = RangeQuery(lo, hi)
        assert match_vectorized(obj, query) == match_scalar(obj, query)


@pytest.mark.parametrize("m", [1, 7, 8, 9, 20, 100])
def test_kernel_equivalence_on_boundaries(m):
    rng = np.random.default_rng(100 + m)
    for _ in range(200):
        obj = rng.random(m, dtype=np.float32)
        lower = obj - rng.choice([0.0, 0.1, -0.1], size=m).astype(np.float32)
        upper = obj + rng.choice([0.0, 0.1, -0.1], size=m).astype(np.float32)
        upper = np.maximum(lower, upper)
        query = RangeQuery(lower, upper)
        assert match_vectorized(obj, query) == match_scalar(obj, query)
        assert match_vectorized(obj, RangeQuery(obj, obj))


@pytest.mark.parametrize("mode", list(KernelMode))
def test_select_equals_rowwise_match(mode, wide):
    kernel = MatchKernel(mode)
    rows = wide.values[:300]
    query = RangeQuery(np.full(20, 0.1), np.full(20, 0.95))
    expected = [i for i, row in enumerate(rows) if match_scalar(row, query)]
    assert kernel.select(rows, query).tolist() == expected


def test_query_sentinels():
    query = RangeQuery.of([0.1, None, 0.2], [0.5, None, 0.4])
    assert query.queried.tolist() == [True, False, True]
    assert query.dims.tolist() == [0, 2]
    assert not RangeQuery.full(4).queried.any()


def test_query_rejects_inverted_bounds():
    with pytest.raises(InvalidQuery):
        RangeQuery([0.6], [0.5])
    with pytest.raises(InvalidQuery):
        RangeQuery([0.1, 0.2], [0.5])
    with pytest.raises(InvalidQuery):
        RangeQuery([np.nan], [0.5])


def test_query_copies_bounds():
    lower = np.array([0.1, 0.2], dtype=np.float32)
    query = RangeQuery(lower, [0.5, 0.5])
    lower[0] = 0.4
    assert query.lower[0] == np.float32(0.1)


def test_dataset_bounds():
    data = DataSet.from_rows([[0.1, 5.0], [0.9, -1.0], [0.5, 2.0]])
    assert (data.n, data.m) == (3, 2)
    assert data.per_dim_bounds.tolist() == [[np.float32(0.1), np.float32(0.9)], [-1.0, 5.0]]
    assert data.columns.shape == (2, 3)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf, 1e39])
def test_dataset_rejects_non_finite(bad):
    with pytest.raises(InvalidData, match="object 1"):
        DataSet.from_rows([[0.1, 0.2], [0.1, bad]])


def test_dataset_empty_needs_dimensionality():
    assert DataSet.from_rows([], m=3).m == 3
    with pytest.raises(InvalidData):
        DataSet.from_rows([])


def test_result_set():
    result = ResultSet.from_unsorted([5, 1, 3])
    assert list(result) == [1, 3, 5]
    assert 3 in result and 4 not in result
    assert result.is_canonical(6)
    assert not result.is_canonical(5)
    missing, extra = result.diff(ResultSet.from_sorted([1, 2]))
    assert missing.tolist() == [2]
    assert extra.tolist() == [3, 5]


def test_oracle_enumerated():
    data = DataSet.from_rows([[0.1], [0.5], [0.9]])
    query = RangeQuery([0.2], [0.9])
    stats = selectivity_oracle(data, query)
    assert stats.joint == pytest.approx(2 / 3)
    assert stats.per_dim == pytest.approx((2 / 3,))
    assert list(oracle_ids(data, query)) == [1, 2]


def test_oracle_full_domain(uniform):
    assert selectivity_oracle(uniform, RangeQuery.full(uniform.m)).joint == 1.0
    assert len(oracle_ids(uniform, RangeQuery.full(uniform.m))) == uniform.n


def test_oracle_unqueried_dimensions(uniform):
    query = RangeQuery.of([0.2, None, None, None, None], [0.4, None, None, None, None])
    stats = selectivity_oracle(uniform, query)
    assert stats.per_dim[1:] == (1.0, 1.0, 1.0, 1.0)
    assert stats.joint == pytest.approx(stats.per_dim[0])


def test_oracle_empty_dataset():
    data = DataSet.from_rows([], m=2)
    stats = selectivity_oracle(data, RangeQuery.of([0.1, None], [0.2, None]))
    assert stats.joint == 0.0
    assert stats.per_dim == (0.0, 1.0)
    assert len(oracle_ids(data, RangeQuery.full(2))) == 0


def test_oracle_joint_bounded_by_each_dimension(uniform, queries):
    for query in queries:
        stats = selectivity_oracle(uniform, query)
        assert 0 <= stats.joint <= min(stats.per_dim[j] for j in query.dims.tolist())


def test_product_law():
    rng = np.random.default_rng(7)
    data = DataSet.from_rows(rng.random((100_000, 2), dtype=np.float32))
    errors = []
    for _ in range(50):
        a, b = rng.random(2), rng.random(2)
        stats = selectivity_oracle(data, RangeQuery(np.minimum(a, b), np.maximum(a, b)))
        errors.append(abs(stats.joint - stats.per_dim[0] * stats.per_dim[1]))
    assert np.mean(errors) <= 0.005


def test_widening_is_monotone(uniform, queries):
    for query in queries[:20]:
        before = set(oracle_ids(uniform, query))
        after = set(oracle_ids(uniform, query.widened(2, -0.1, 1.1)))
        assert before <= after


def test_dataset_round_trip(tmp_path, small):
    path = tmp_path / "small.bin"
    write_dataset(path, small)
    assert read_dataset(path) == small
    raw = path.read_bytes()
    assert raw[:4] == b"MDRQ"
    assert len(raw) == 20 + small.n * small.m * 4


def test_dataset_round_trip_empty(tmp_path):
    path = tmp_path / "empty.bin"
    write_dataset(path, DataSet.from_rows([], m=4))
    data = read_dataset(path)
    assert (data.n, data.m) == (0, 4)


def test_dataset_format_errors(tmp_path, small):
    path = tmp_path / "small.bin"
    write_dataset(path, small)
    raw = path.read_bytes()

    (tmp_path / "short.bin").write_bytes(raw[:-4])
    with pytest.raises(DatasetFormatError):
        read_dataset(tmp_path / "short.bin")

    (tmp_path / "magic.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DatasetFormatError):
        read_dataset(tmp_path / "magic.bin")

    (tmp_path / "header.bin").write_bytes(raw[:10])
    with pytest.raises(DatasetFormatError):
        read_dataset(tmp_path / "header.bin")


def test_counters_merge():
    total = Counters(objects_compared=10, early_breaks=4)
    total.merge(Counters(objects_compared=5, nodes_visited=3, merge_chunks=2))
    assert total.as_dict() == {
        "objects_compared": 15, "early_breaks": 4, "nodes_visited": 3, "leaves_visited": 0,
        "buckets_scanned": 0, "columns_scanned": 0, "merge_chunks": 2,
    }


def test_lane_filter_narrows_across_blocks():
    rows = np.full((5, 17), 0.5, dtype=np.float32)
    rows[1, 10] = 2.0
    rows[2, 16] = 2.0
    rows[3, 0] = 2.0
    query = RangeQuery(np.zeros(17), np.ones(17))
    counters = Counters()
    assert lane_filter(rows, rows, query, counters=counters).tolist() == [0, 4]
    assert (counters.objects_compared, counters.early_breaks) == (5, 3)
    assert lane_filter(rows[[0, 4]], rows[[0, 4]], query).tolist() == [0, 1]
    assert lane_filter(rows[:0], rows[:0], query).tolist() == []
