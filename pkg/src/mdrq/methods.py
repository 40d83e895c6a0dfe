from enum import Enum
from functools import partial

from loguru import logger

from .core import Counters, DataSet, MatchKernel, RangeQuery, ResultSet
from .kdtree import KdTree
from .parallel import ExecutorConfig, PartitionedIndex, WorkerPool, build_partitioned, make_layout, \
    search_partitioned
from .rstar import RStarConfig, RStarTree
from .scan import ColumnSet, build_horizontal, horizontal_scan, sequential_scan, vertical_scan
from .vafile import VaFile

__all__ = ["Method", "Engine"]


class Method(Enum):
    SEQUENTIAL = "seq"
    HORIZONTAL = "hscan"
    VERTICAL = "vscan"
    KDTREE = "kdtree"
    RSTAR = "rstar"
    VAFILE = "vafile"


class Engine:
    """One access method built over a dataset, answering queries through its own worker pool"""

    def __init__(self, method: Method, data: DataSet, *, executor: ExecutorConfig | None = None,
                 kernel: MatchKernel = MatchKernel(), seed: int = 0, rstar: RStarConfig = RStarConfig()):
        self.method = method
        self.data = data
        self.executor = executor or ExecutorConfig()
        self.kernel = kernel
        self.counters = Counters()
        self.pool = WorkerPool(self.executor.threads)
        self.index: PartitionedIndex | None = None
        self.columns: ColumnSet | None = None

        match method:
            case Method.SEQUENTIAL:
                pass
            case Method.VERTICAL:
                self.columns = ColumnSet.from_dataset(data)
            case Method.HORIZONTAL:
                self.index = build_horizontal(data, make_layout(data.n, self.executor.p, seed), self.pool)
            case _:
                factory = {
                    Method.KDTREE: partial(KdTree.build, seed=seed),
                    Method.RSTAR: partial(RStarTree.build, seed=seed, config=rstar),
                    Method.VAFILE: VaFile.build,
                }[method]
                layout = make_layout(data.n, self.executor.p, seed)
                self.index = build_partitioned(factory, data, layout, self.pool)
        logger.debug("{} ready over {}×{} with t={}", method.value, data.n, data.m, self.executor.threads)

    def search(self, query: RangeQuery) -> ResultSet:
        query.check(self.data.m)
        match self.method:
            case Method.SEQUENTIAL:
                return sequential_scan(self.data, query, self.kernel, self.counters)
            case Method.VERTICAL:
                return vertical_scan(self.columns, query, self.executor.threads, self.pool, self.counters)
            case Method.HORIZONTAL:
                return horizontal_scan(self.data, self.index, query, self.kernel, self.pool, self.counters)
            case _:
                return search_partitioned(self.index, query, self.kernel, self.pool, self.counters)

    def footprint(self) -> int:
        """Estimated bytes held by the structure, the raw data for scans"""
        if self.index is not None:
            return self.index.footprint()
        if self.columns is not None:
            return self.columns.footprint()
        return self.data.values.nbytes

    def reset_counters(self) -> Counters:
        counters, self.counters = self.counters, Counters()
        return counters

    def close(self):
        self.pool.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
