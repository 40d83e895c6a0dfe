from dataclasses import dataclass

import numpy as np

from .core import LANES, Counters, DataSet, DimensionMismatch, MatchKernel, RangeQuery, ResultSet
from .parallel import PartitionedIndex, PartitionLayout, WorkerPool, build_partitioned, search_partitioned

__all__ = [
    "ColumnSet", "BitMask", "ScanPartition", "build_horizontal", "sequential_scan", "horizontal_scan",
    "vertical_scan", "column_mask", "merge_masks",
]


@dataclass(frozen=True, eq=False)
class ColumnSet:
    """m one-dimensional arrays of length n"""

    columns: np.ndarray

    @classmethod
    def from_dataset(cls, data: DataSet) -> "ColumnSet":
        return cls(data.columns)

    def to_dataset(self) -> DataSet:
        return DataSet.from_rows(self.columns.T, m=self.m)

    @property
    def m(self) -> int:
        return self.columns.shape[0]

    @property
    def n(self) -> int:
        return self.columns.shape[1]

    def footprint(self) -> int:
        return self.columns.nbytes


@dataclass(frozen=True, eq=False)
class BitMask:
    """n bits packed little-endian, bit i set iff object i matched"""

    bits: np.ndarray
    n: int

    @classmethod
    def from_bools(cls, flags) -> "BitMask":
        flags = np.asarray(flags, dtype=bool)
        return cls(np.packbits(flags, bitorder="little"), flags.size)

    def __and__(self, other: "BitMask") -> "BitMask":
        if self.n != other.n:
            raise ValueError(f"cannot AND masks of {self.n} and {other.n} bits")
        return BitMask(self.bits & other.bits, self.n)

    def __eq__(self, other):
        if not isinstance(other, BitMask):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.bits, other.bits)

    def flags(self) -> np.ndarray:
        return np.unpackbits(self.bits, count=self.n, bitorder="little").astype(bool)

    def popcount(self) -> int:
        return int(np.unpackbits(self.bits, count=self.n, bitorder="little").sum())

    def ids(self) -> np.ndarray:
        return np.flatnonzero(self.flags())

    def __str__(self):
        return "".join("1" if bit else "0" for bit in self.flags())


class ScanPartition:
    """One horizontal partition held as its own contiguous m-dimensional array"""

    def __init__(self, objects: np.ndarray, ids: np.ndarray):
        self.objects = np.ascontiguousarray(objects)
        self.ids = ids

    def __len__(self):
        return self.ids.size

    def search(self, query: RangeQuery, kernel: MatchKernel, counters: Counters | None = None) -> ResultSet:
        if not self.ids.size:
            return ResultSet.empty()
        hits = kernel.select(self.objects, query, counters)
        return ResultSet.from_unsorted(self.ids[hits])

    def footprint(self) -> int:
        return self.objects.nbytes + self.ids.nbytes


def sequential_scan(data: DataSet, query: RangeQuery, kernel: MatchKernel = MatchKernel(),
                    counters: Counters | None = None) -> ResultSet:
    query.check(data.m)
    if not data.n:
        return ResultSet.empty()
    return ResultSet.from_sorted(kernel.select(data.values, query, counters))


def build_horizontal(data: DataSet, layout: PartitionLayout, pool: WorkerPool | None = None) -> PartitionedIndex:
    """One contiguous ScanPartition per layout run"""
    return build_partitioned(ScanPartition, data, layout, pool)


def horizontal_scan(data: DataSet, partitions: PartitionLayout | PartitionedIndex, query: RangeQuery,
                    kernel: MatchKernel = MatchKernel(), pool: WorkerPool | None = None,
                    counters: Counters | None = None) -> ResultSet:
    """Scans every partition in parallel; a bare layout is copied into partitions on each call"""
    query.check(data.m)
    if isinstance(partitions, PartitionLayout):
        partitions = build_horizontal(data, partitions, pool)
    partitions.layout.check(data)
    return search_partitioned(partitions, query, kernel, pool, counters)


def column_mask(column: np.ndarray, lower: float, upper: float, lanes: int = LANES) -> BitMask:
    """One-dimensional range scan, one result bit per lane.

    Full blocks of `lanes` values are compared against both bounds at once and
    packed into one byte each; the n mod lanes tail is compared one value at a time.
    """
    n = column.size
    full = (n // lanes) * lanes
    block = column[:full].reshape(-1, lanes)
    hits = (lower <= block) & (block <= upper)
    flags = np.empty(n, dtype=bool)
    flags[:full] = hits.ravel()
    for i in range(full, n):
        flags[i] = lower <= column[i] <= upper
    return BitMask.from_bools(flags)


def merge_masks(masks: list[BitMask], chunks: int, pool: WorkerPool | None = None) -> BitMask:
    """AND of all masks, computed over `chunks` byte ranges; the last range takes the remainder"""
    n = masks[0].n
    nbytes = masks[0].bits.size
    step = nbytes // chunks
    bounds = [(c * step, (c + 1) * step if c < chunks - 1 else nbytes) for c in range(chunks)]
    stacked = np.stack([mask.bits for mask in masks])

    def merge(bound: tuple[int, int]) -> np.ndarray:
        start, stop = bound
        return np.bitwise_and.reduce(stacked[:, start:stop], axis=0)

    parts = (pool or WorkerPool()).run(merge, bounds)
    return BitMask(np.concatenate(parts).astype(np.uint8), n)


def vertical_scan(cols: ColumnSet, query: RangeQuery, workers: int = 1, pool: WorkerPool | None = None,
                  counters: Counters | None = None) -> ResultSet:
    if cols.m != query.m:
        raise DimensionMismatch(f"query has {query.m} dimensions, columns have {cols.m}")
    if workers < 1:
        raise ValueError(f"worker count must be at least 1, got {workers}")
    dims = query.dims.tolist()
    if not dims:
        return ResultSet.from_sorted(np.arange(cols.n))
    if not cols.n:
        return ResultSet.empty()

    pool = pool or WorkerPool()
    lower, upper = query.lower, query.upper

    def scan(j: int) -> BitMask:
        return column_mask(cols.columns[j], lower[j], upper[j])

    masks = pool.run(scan, dims)
    merged = merge_masks(masks, workers, pool)
    if counters is not None:
        counters.columns_scanned += len(dims)
        counters.objects_compared += len(dims) * cols.n
        counters.merge_chunks += workers
    return ResultSet.from_sorted(merged.ids())
