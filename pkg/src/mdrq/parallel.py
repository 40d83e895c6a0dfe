from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, TypeVar

import numpy as np
from loguru import logger

from .config import hardware_threads
from .core import AccessMethod, Counters, DataSet, MatchKernel, RangeQuery, ResultSet

__all__ = [
    "LayoutMismatch", "ExecutorConfig", "WorkerPool", "PartitionLayout", "PartitionedIndex",
    "make_layout", "build_partitioned", "search_partitioned",
]

T = TypeVar("T")
R = TypeVar("R")

Factory = Callable[[np.ndarray, np.ndarray], AccessMethod]


class LayoutMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ExecutorConfig:
    threads: int = field(default_factory=hardware_threads)
    partitions: int | None = None

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError(f"thread count must be at least 1, got {self.threads}")
        if self.partitions is not None and self.partitions < 1:
            raise ValueError(f"partition count must be at least 1, got {self.partitions}")

    @property
    def p(self) -> int:
        return self.partitions or self.threads


class WorkerPool:
    """Fan-out/fan-in over a fixed set of threads; run() is a barrier"""

    def __init__(self, threads: int = 1):
        self.threads = threads
        self._executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def run(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        if self._executor is None:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True, eq=False)
class PartitionLayout:
    p: int
    seed: int
    assignment: np.ndarray
    parts: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.assignment.size

    def sizes(self) -> list[int]:
        return [part.size for part in self.parts]

    def check(self, data: DataSet):
        if data.n != self.n:
            raise LayoutMismatch(f"layout covers {self.n} objects, data has {data.n}")


def make_layout(n: int, p: int, seed: int = 0) -> PartitionLayout:
    """Random permutation split into p contiguous runs of ⌈n/p⌉ or ⌊n/p⌋ ids"""
    if p < 1:
        raise ValueError(f"partition count must be at least 1, got {p}")
    permutation = np.random.default_rng(seed).permutation(n)
    parts = tuple(np.array_split(permutation, p))
    assignment = np.empty(n, dtype=np.int32)
    for q, part in enumerate(parts):
        part.setflags(write=False)
        assignment[part] = q
    assignment.setflags(write=False)
    return PartitionLayout(p, seed, assignment, parts)


@dataclass(frozen=True, eq=False)
class PartitionedIndex:
    instances: tuple[AccessMethod, ...]
    layout: PartitionLayout

    def __len__(self):
        return sum(len(instance) for instance in self.instances)

    def footprint(self) -> int:
        return sum(instance.footprint() for instance in self.instances)


def build_partitioned(factory: Factory, data: DataSet, layout: PartitionLayout,
                      pool: WorkerPool | None = None) -> PartitionedIndex:
    """One instance per partition, each built only from its partition's objects"""
    layout.check(data)

    def build(part: np.ndarray) -> AccessMethod:
        return factory(data.values[part], part)

    instances = (pool or WorkerPool()).run(build, layout.parts)
    logger.debug("built {} instance(s) over {} objects", len(instances), data.n)
    return PartitionedIndex(tuple(instances), layout)


def search_partitioned(index: PartitionedIndex, query: RangeQuery, kernel: MatchKernel = MatchKernel(),
                       pool: WorkerPool | None = None, counters: Counters | None = None) -> ResultSet:
    def search(instance: AccessMethod) -> tuple[ResultSet, Counters]:
        local = Counters()
        return instance.search(query, kernel, local), local

    partials = (pool or WorkerPool()).run(search, index.instances)
    if counters is not None:
        for _, local in partials:
            counters.merge(local)
    ids = np.sort(np.concatenate([partial.ids for partial, _ in partials] or [np.empty(0, np.int64)]))
    # partitions are disjoint, so the concatenation never holds duplicates
    assert not ids.size or (np.diff(ids) > 0).all()
    return ResultSet.from_sorted(ids)
