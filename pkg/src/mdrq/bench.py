import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np
from loguru import logger

from .config import hardware_threads
from .core import DataSet, KernelMode, MatchKernel, RangeQuery, oracle_ids, selectivity_oracle
from .methods import Engine, Method
from .parallel import ExecutorConfig
from .rstar import RStarConfig
from .workload import GMRQB_COLUMNS, DataKind, GeneratorSpec, WorkloadError, generate, instantiate_template, \
    load_templates, mixed_workload, pair_queries

__all__ = [
    "QUERIES_PER_BATCH", "REPORT_HEADER", "SweepAxis", "BenchmarkConfig", "BenchmarkReport", "SweepResult",
    "Mismatch", "make_workload", "run_batch", "run_benchmark", "sweep", "write_csv", "emit_report", "write_reports",
    "read_reports", "verify",
]

QUERIES_PER_BATCH = 1000

REPORT_HEADER = ("method", "n", "m", "threads", "partitions", "kernel", "clusters", "avg_selectivity",
                 "queries", "seconds", "qps", "objects_compared", "nodes_visited")


class SweepAxis(Enum):
    SELECTIVITY = "selectivity"
    DIMENSIONALITY = "dimensionality"
    DATASET_SIZE = "dataset_size"
    CLUSTERS = "clusters"
    THREADS = "threads"
    KERNEL = "kernel"
    TEMPLATE = "template"


@dataclass(frozen=True)
class BenchmarkConfig:
    method: Method = Method.HORIZONTAL
    data: GeneratorSpec = GeneratorSpec()
    queries: int = QUERIES_PER_BATCH
    # None: pair-generated queries, 0: mixed template workload, k: template k
    template: int | None = None
    threads: int = field(default_factory=hardware_threads)
    partitions: int | None = None
    kernel: KernelMode = KernelMode.VECTORIZED
    repetitions: int = 3
    seed: int = 0
    selectivity_sample: int = 100
    rstar: RStarConfig = RStarConfig()

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be at least 1, got {self.repetitions}")
        if self.threads < 1:
            raise ValueError(f"thread count must be at least 1, got {self.threads}")

    @property
    def executor(self) -> ExecutorConfig:
        return ExecutorConfig(self.threads, self.partitions)

    def replace(self, **changes) -> "BenchmarkConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class BenchmarkReport:
    method: str
    n: int
    m: int
    threads: int
    partitions: int
    kernel: str
    clusters: int
    avg_selectivity: float
    selectivity_sigma: float
    queries: int
    seconds: float
    build_seconds: float
    result_cardinality: int
    objects_compared: int
    nodes_visited: int
    memory_bytes: int
    template: int | None = None

    @property
    def qps(self) -> float:
        if not self.queries:
            return 0.0
        return self.queries / self.seconds if self.seconds > 0 else math.inf

    def row(self) -> tuple:
        return (self.method, self.n, self.m, self.threads, self.partitions, self.kernel, self.clusters,
                repr(self.avg_selectivity), self.queries, repr(self.seconds), repr(self.qps),
                self.objects_compared, self.nodes_visited)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "BenchmarkReport":
        return cls(**json.loads(line))


def make_workload(config: BenchmarkConfig, data: DataSet) -> list[RangeQuery]:
    if config.template is None:
        return pair_queries(data, config.queries, config.seed)
    templates = load_templates()
    if config.template == 0:
        per_template = -(-config.queries // len(templates))
        batch = mixed_workload(templates.values(), data, per_template, config.seed)
        return [query for _, query in batch[:config.queries]]
    if config.template not in templates:
        raise WorkloadError(f"unknown template {config.template}, expected 0 or one of {sorted(templates)}")
    rng = np.random.default_rng(config.seed)
    template = templates[config.template]
    return [instantiate_template(template, data, rng) for _ in range(config.queries)]


def run_batch(engine: Engine, queries: Sequence[RangeQuery]) -> int:
    """Summed result cardinality of the batch"""
    total = 0
    for query in queries:
        total += len(engine.search(query))
    return total


def _partitions(config: BenchmarkConfig, m: int) -> int:
    match config.method:
        case Method.SEQUENTIAL:
            return 1
        case Method.VERTICAL:
            return m
        case _:
            return config.executor.p


def run_benchmark(config: BenchmarkConfig, data: DataSet | None = None, queries: Sequence[RangeQuery] | None = None,
                  *, timer: Callable[[], float] = time.perf_counter) -> BenchmarkReport:
    """Build once, one untimed warmup batch, then the median of `repetitions` timed batches"""
    if data is None:
        data = generate(config.data)
    if queries is None:
        queries = make_workload(config, data)
    for query in queries:
        query.check(data.m)

    sample = [selectivity_oracle(data, q).joint for q in queries[:config.selectivity_sample]]
    started = time.perf_counter()
    engine = Engine(config.method, data, executor=config.executor, kernel=MatchKernel(config.kernel),
                    seed=config.seed, rstar=config.rstar)
    build_seconds = time.perf_counter() - started

    with engine:
        cardinality = run_batch(engine, queries)
        engine.reset_counters()
        times = []
        for _ in range(config.repetitions):
            start = timer()
            total = run_batch(engine, queries)
            times.append(timer() - start)
            if total != cardinality:
                logger.warning("{}: batch cardinality changed from {} to {}", config.method.value, cardinality, total)
        counters = engine.reset_counters()
        memory = engine.footprint()
        logger.debug("{} counters over {} batches: {}", config.method.value, config.repetitions, counters.as_dict())

    seconds = float(np.median(times))
    report = BenchmarkReport(
        method=config.method.value,
        n=data.n,
        m=data.m,
        threads=config.threads,
        partitions=_partitions(config, data.m),
        kernel=config.kernel.value,
        clusters=config.data.cluster_count if config.data.kind is DataKind.CLUSTERED else 0,
        avg_selectivity=float(np.mean(sample)) if sample else 0.0,
        selectivity_sigma=float(np.std(sample)) if sample else 0.0,
        queries=len(queries),
        seconds=seconds,
        build_seconds=build_seconds,
        result_cardinality=cardinality,
        objects_compared=counters.objects_compared // config.repetitions,
        nodes_visited=counters.nodes_visited // config.repetitions,
        memory_bytes=memory,
        template=config.template,
    )
    logger.info("{} n={} m={} t={}: {:.1f} queries/s", report.method, report.n, report.m, report.threads, report.qps)
    return report


@dataclass
class SweepResult:
    reports: list[BenchmarkReport] = field(default_factory=list)
    skipped: list[tuple[object, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.reports)

    def __len__(self):
        return len(self.reports)


def _selectivity_buckets(data: DataSet, edges: Sequence[float], base: BenchmarkConfig,
                         pool_factor: int = 10) -> list[list[RangeQuery]]:
    """Pair-generated queries binned by oracle selectivity into (previous edge, edge]"""
    candidates = pair_queries(data, base.queries * pool_factor, base.seed)
    buckets: list[list[RangeQuery]] = [[] for _ in edges]
    for query in candidates:
        sel = selectivity_oracle(data, query).joint
        for b, edge in enumerate(edges):
            low = edges[b - 1] if b else -1.0
            if low < sel <= edge:
                if len(buckets[b]) < base.queries:
                    buckets[b].append(query)
                break
    return buckets


def _point(axis: SweepAxis, value, base: BenchmarkConfig) -> BenchmarkConfig | str:
    """Config for one grid point, or the reason it is infeasible"""
    match axis:
        case SweepAxis.DIMENSIONALITY:
            if int(value) < 1:
                return f"dimensionality {value} < 1"
            return base.replace(data=dataclasses.replace(base.data, m=int(value)))
        case SweepAxis.DATASET_SIZE:
            if int(value) < 2:
                return f"dataset size {value} cannot span pair queries"
            return base.replace(data=dataclasses.replace(base.data, n=int(value)))
        case SweepAxis.CLUSTERS:
            if int(value) < 1:
                return f"cluster count {value} < 1"
            return base.replace(data=dataclasses.replace(base.data, kind=DataKind.CLUSTERED, cluster_count=int(value)))
        case SweepAxis.THREADS:
            if int(value) < 1:
                return f"thread count {value} < 1"
            return base.replace(threads=int(value))
        case SweepAxis.KERNEL:
            try:
                return base.replace(kernel=KernelMode(value))
            except ValueError:
                return f"unknown kernel mode {value!r}"
        case SweepAxis.TEMPLATE:
            if int(value) != 0 and int(value) not in load_templates():
                return f"unknown template {value}"
            return base.replace(template=int(value))
        case SweepAxis.SELECTIVITY:
            return base


def sweep(axis: SweepAxis, grid: Sequence, base: BenchmarkConfig, methods: Iterable[Method] | None = None,
          data: DataSet | None = None) -> SweepResult:
    """One report per grid point per method, every other parameter held fixed"""
    if not grid:
        raise ValueError("sweep grid is empty")
    methods = list(methods or [base.method])
    result = SweepResult()
    changes_data = axis in (SweepAxis.DIMENSIONALITY, SweepAxis.DATASET_SIZE, SweepAxis.CLUSTERS)
    shared = None if changes_data else data

    buckets = None
    if axis is SweepAxis.SELECTIVITY:
        if shared is None:
            shared = generate(base.data)
        buckets = _selectivity_buckets(shared, [float(v) for v in grid], base)

    def skip(value, reason: str):
        logger.warning("sweep {}: skipping {} ({})", axis.value, value, reason)
        result.skipped.append((value, reason))

    for i, value in enumerate(grid):
        config = _point(axis, value, base)
        if isinstance(config, str):
            skip(value, config)
            continue
        point_data = shared if shared is not None else generate(config.data)
        if config.template is not None and point_data.m < len(GMRQB_COLUMNS):
            skip(value, f"template workloads need {len(GMRQB_COLUMNS)} dimensions, data has {point_data.m}")
            continue

        if buckets is not None:
            queries = buckets[i]
            if not queries:
                skip(value, f"no pair query with selectivity in ({grid[i - 1] if i else 0}, {value}]")
                continue
        else:
            queries = make_workload(config, point_data)
        for method in methods:
            result.reports.append(run_benchmark(config.replace(method=method), point_data, queries))
    return result


def write_csv(reports: Iterable[BenchmarkReport], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for report in reports:
        writer.writerow(report.row())


def emit_report(reports: Iterable[BenchmarkReport], path: str | Path):
    with open(path, "w", newline="") as f:
        write_csv(reports, f)


def write_reports(path: str | Path, reports: Iterable[BenchmarkReport]):
    with open(path, "w") as f:
        for report in reports:
            f.write(report.to_json() + "\n")


def read_reports(path: str | Path) -> list[BenchmarkReport]:
    with open(path) as f:
        return [BenchmarkReport.from_json(line) for line in f if line.strip()]


@dataclass(frozen=True)
class Mismatch:
    method: str
    query: int
    missing: tuple[int, ...]
    extra: tuple[int, ...]

    def __str__(self):
        return f"{self.method} query {self.query}: missing {list(self.missing)} extra {list(self.extra)}"


def verify(data: DataSet, queries: Sequence[RangeQuery], methods: Iterable[Method] | None = None,
           threads: int = 1, seed: int = 0) -> list[Mismatch]:
    """Every method in every applicable kernel mode against the oracle"""
    expected = [oracle_ids(data, query) for query in queries]
    mismatches = []
    for method in methods or list(Method):
        modes = [KernelMode.VECTORIZED] if method is Method.VERTICAL else list(KernelMode)
        with Engine(method, data, executor=ExecutorConfig(threads), seed=seed) as engine:
            for mode in modes:
                engine.kernel = MatchKernel(mode)
                label = method.value if len(modes) == 1 else f"{method.value}/{mode.value}"
                for i, (query, truth) in enumerate(zip(queries, expected)):
                    got = engine.search(query)
                    if got != truth or not got.is_canonical(data.n):
                        missing, extra = got.diff(truth)
                        mismatches.append(Mismatch(label, i, tuple(missing.tolist()), tuple(extra.tolist())))
        logger.info("verified {} over {} queries", method.value, len(queries))
    return mismatches
