import csv
import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from loguru import logger

from .core import VALUE, DataSet, RangeQuery

__all__ = [
    "WorkloadError", "CsvFormatError", "DataKind", "GeneratorSpec", "PredicateStyle", "QueryTemplate",
    "ColumnKind", "GMRQB_COLUMNS", "generate", "gen_uniform", "gen_clustered", "cluster_boxes", "cluster_side",
    "gen_skewed", "gen_gmrqb", "write_gmrqb_csv", "gen_query_from_pair", "pair_queries",
    "load_templates", "instantiate_template", "mixed_workload", "categorical_hash", "parse_schema",
    "load_csv", "write_queries", "read_queries",
]

FLOAT32_MAX = float(np.finfo(VALUE).max)


class WorkloadError(ValueError):
    pass


class CsvFormatError(ValueError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class DataKind(Enum):
    UNIFORM = "uniform"
    CLUSTERED = "clustered"
    SKEWED = "skewed"
    GMRQB = "gmrqb"


@dataclass(frozen=True)
class GeneratorSpec:
    kind: DataKind = DataKind.UNIFORM
    n: int = 10_000
    m: int = 5
    cluster_count: int = 1
    cluster_extent: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise WorkloadError(f"object count must not be negative, got {self.n}")
        if self.m < 1:
            raise WorkloadError(f"dimensionality must be at least 1, got {self.m}")
        if self.kind is DataKind.CLUSTERED and self.cluster_count < 1:
            raise WorkloadError(f"need at least one cluster, got {self.cluster_count}")
        if not 0 < self.cluster_extent <= 1:
            raise WorkloadError(f"cluster extent must lie in (0, 1], got {self.cluster_extent}")


def generate(spec: GeneratorSpec) -> DataSet:
    match spec.kind:
        case DataKind.UNIFORM:
            return gen_uniform(spec)
        case DataKind.CLUSTERED:
            return gen_clustered(spec)
        case DataKind.SKEWED:
            return gen_skewed(spec)
        case DataKind.GMRQB:
            return gen_gmrqb(spec.n, spec.seed)


def gen_uniform(spec: GeneratorSpec) -> DataSet:
    rng = np.random.default_rng(spec.seed)
    return DataSet.from_rows(rng.random((spec.n, spec.m), dtype=VALUE), m=spec.m)


def cluster_boxes(spec: GeneratorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster (lows, highs), each shape (cluster_count, m)"""
    rng = np.random.default_rng(spec.seed)
    return _boxes(rng, spec)


def cluster_side(spec: GeneratorSpec) -> float:
    """Side length of every cluster box: the declared extent, at most half the spacing of evenly spread centers"""
    if spec.cluster_count == 1:
        return spec.cluster_extent
    return min(spec.cluster_extent, 1 / (2 * (spec.cluster_count - 1)))


def _boxes(rng: np.random.Generator, spec: GeneratorSpec) -> tuple[np.ndarray, np.ndarray]:
    side = cluster_side(spec)
    # comonotone centers: cluster c holds the c-th smallest center in every dimension
    centers = np.sort(rng.random((spec.cluster_count, spec.m)), axis=0)
    lows = np.clip(centers - side / 2, 0.0, 1.0 - side).astype(VALUE)
    highs = np.minimum(lows.astype(np.float64) + side, 1.0).astype(VALUE)
    return lows, highs


def gen_clustered(spec: GeneratorSpec) -> DataSet:
    """Uniform objects inside axis-aligned boxes; object i belongs to cluster i mod cluster_count"""
    rng = np.random.default_rng(spec.seed)
    lows, highs = _boxes(rng, spec)
    cluster = np.arange(spec.n) % spec.cluster_count
    lo = lows[cluster].astype(np.float64)
    hi = highs[cluster].astype(np.float64)
    values = lo + rng.random((spec.n, spec.m)) * (hi - lo)
    values = np.clip(values.astype(VALUE), lows[cluster], highs[cluster])
    return DataSet.from_rows(values, m=spec.m)


def gen_skewed(spec: GeneratorSpec) -> DataSet:
    """Sensor-style stream: a monotone timestamp followed by narrow random walks"""
    rng = np.random.default_rng(spec.seed)
    values = np.empty((spec.n, spec.m), dtype=np.float64)
    values[:, 0] = np.cumsum(rng.exponential(1.0, spec.n)).round()
    if spec.m > 1:
        steps = rng.integers(-3, 4, size=(spec.n, spec.m - 1))
        values[:, 1:] = 15_000 + np.cumsum(steps, axis=0)
    return DataSet.from_rows(values, m=spec.m)


def categorical_hash(value: str) -> float:
    """Deterministic 64-bit hash folded into [0, 2^24), exact in 32-bit reals"""
    h = int.from_bytes(hashlib.blake2b(value.encode(), digest_size=8).digest(), "little")
    return float((h ^ (h >> 24) ^ (h >> 48)) & 0xFFFFFF)


class ColumnKind(Enum):
    NUMERIC = "n"
    CATEGORICAL = "c"


def parse_schema(text: str) -> tuple[ColumnKind, ...]:
    """'nncc' or 'n,n,c,c'"""
    try:
        return tuple(ColumnKind(ch) for ch in text.replace(",", "").strip())
    except ValueError:
        raise WorkloadError(f"schema {text!r} may only contain 'n' and 'c'")


def load_csv(path: str | Path, schema: Sequence[ColumnKind]) -> DataSet:
    """Header row skipped; categorical columns hashed, numeric columns parsed as reals"""
    m = len(schema)
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        if next(reader, None) is None:
            return DataSet.from_rows([], m=m)
        for record in reader:
            row = reader.line_num
            if len(record) != m:
                raise CsvFormatError(row, f"expected {m} fields, found {len(record)}")
            values = []
            for j, (kind, field) in enumerate(zip(schema, record)):
                if kind is ColumnKind.CATEGORICAL:
                    values.append(categorical_hash(field))
                    continue
                try:
                    value = float(field)
                except ValueError:
                    raise CsvFormatError(row, f"column {j}: {field!r} is not a number")
                if not math.isfinite(value) or abs(value) > FLOAT32_MAX:
                    raise CsvFormatError(row, f"column {j}: {field!r} is not a finite 32-bit value")
                values.append(value)
            rows.append(values)
    logger.debug("loaded {} rows from {}", len(rows), path)
    return DataSet.from_rows(rows, m=m)


@dataclass(frozen=True)
class _GmrqbColumn:
    name: str
    kind: ColumnKind
    draw: Callable[[np.random.Generator, int], np.ndarray]
    categories: tuple[str, ...] = ()


def _categorical(name: str, categories: Sequence[str], weights: Sequence[float] | None = None) -> _GmrqbColumn:
    p = None if weights is None else np.asarray(weights, dtype=np.float64) / np.sum(weights)
    return _GmrqbColumn(name, ColumnKind.CATEGORICAL,
                        lambda rng, n: rng.choice(len(categories), size=n, p=p), tuple(categories))


def _numeric(name: str, draw: Callable[[np.random.Generator, int], np.ndarray]) -> _GmrqbColumn:
    return _GmrqbColumn(name, ColumnKind.NUMERIC, draw)


# chromosome sizes in Mb, used as sampling weights
_CHROMOSOME_WEIGHTS = [249, 243, 198, 191, 181, 171, 159, 146, 141, 136, 135, 134, 115, 107, 102, 90, 83, 80,
                       59, 64, 47, 51, 156]
_BASES = ("A", "C", "G", "T")

_GMRQB = (
    _numeric("chromosome", lambda rng, n: rng.choice(23, size=n, p=np.array(_CHROMOSOME_WEIGHTS)
                                                      / sum(_CHROMOSOME_WEIGHTS)) + 1.0),
    _numeric("location", lambda rng, n: rng.integers(1, 250_000_000, size=n).astype(np.float64)),
    _numeric("quality", lambda rng, n: np.round(rng.gamma(4.0, 25.0, size=n), 1)),
    _numeric("depth", lambda rng, n: rng.geometric(0.01, size=n).astype(np.float64)),
    _categorical("reference_genome", ("GRCh37", "GRCh38"), (0.8, 0.2)),
    _numeric("variation_id", lambda rng, n: rng.integers(1, 16_000_000, size=n).astype(np.float64)),
    _numeric("allele_freq", lambda rng, n: np.round(rng.beta(0.5, 2.0, size=n), 4)),
    _numeric("allele_count", lambda rng, n: rng.integers(1, 5009, size=n).astype(np.float64)),
    _categorical("ref_base", _BASES),
    _categorical("alt_base", _BASES),
    _categorical("ancestral_allele", _BASES + ("N",), (1, 1, 1, 1, 0.2)),
    _categorical("variant_type", ("SNP", "INDEL", "MNP", "SV"), (0.9, 0.07, 0.02, 0.01)),
    _categorical("sample_id", tuple(f"HG{i:05d}" for i in range(2504))),
    _categorical("gender", ("male", "female")),
    _categorical("family_id", tuple(f"F{i:04d}" for i in range(1200))),
    _categorical("population", ("ACB", "ASW", "BEB", "CDX", "CEU", "CHB", "CHS", "CLM", "ESN", "FIN", "GBR", "GIH",
                                "GWD", "IBS", "ITU", "JPT", "KHV", "LWK", "MSL", "MXL", "PEL", "PJL", "PUR", "STU",
                                "TSI", "YRI")),
    _categorical("relationship", ("unrel", "father", "mother", "child", "sibling"), (0.6, 0.1, 0.1, 0.15, 0.05)),
    _categorical("genotype", ("0|1", "1|0", "1|1"), (0.4, 0.4, 0.2)),
    _categorical("filter", ("PASS", "LowQual"), (0.95, 0.05)),
)

GMRQB_COLUMNS = tuple(column.name for column in _GMRQB)
GMRQB_SCHEMA = tuple(column.kind for column in _GMRQB)


def _gmrqb_draws(n: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [column.draw(rng, n) for column in _GMRQB]


def gen_gmrqb(n: int, seed: int = 0) -> DataSet:
    """19-dimensional genomic-variation-shaped data; categorical attributes hashed as on ingestion"""
    values = np.empty((n, len(_GMRQB)), dtype=VALUE)
    for j, (column, draw) in enumerate(zip(_GMRQB, _gmrqb_draws(n, seed))):
        if column.kind is ColumnKind.CATEGORICAL:
            table = np.array([categorical_hash(c) for c in column.categories], dtype=VALUE)
            values[:, j] = table[draw]
        else:
            values[:, j] = draw
    return DataSet.from_rows(values, m=len(_GMRQB))


def write_gmrqb_csv(path: str | Path, n: int, seed: int = 0):
    """Raw-text form of gen_gmrqb(n, seed), loadable with load_csv(path, GMRQB_SCHEMA)"""
    draws = _gmrqb_draws(n, seed)
    columns = []
    for column, draw in zip(_GMRQB, draws):
        if column.kind is ColumnKind.CATEGORICAL:
            columns.append([column.categories[i] for i in draw.tolist()])
        else:
            columns.append([repr(v) for v in draw.astype(VALUE).tolist()])
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(GMRQB_COLUMNS)
        writer.writerows(zip(*columns))


def gen_query_from_pair(data: DataSet, seed: int | np.random.Generator = 0) -> RangeQuery:
    """Complete-match query spanned by two distinct random objects"""
    if data.n < 2:
        raise WorkloadError(f"need at least two objects to span a query, have {data.n}")
    rng = np.random.default_rng(seed)
    a, b = rng.choice(data.n, size=2, replace=False)
    first, second = data.values[a], data.values[b]
    return RangeQuery(np.minimum(first, second), np.maximum(first, second))


def pair_queries(data: DataSet, count: int, seed: int = 0) -> list[RangeQuery]:
    rng = np.random.default_rng(seed)
    return [gen_query_from_pair(data, rng) for _ in range(count)]


class PredicateStyle(Enum):
    POINT = "point"
    RANGE = "range"


@dataclass(frozen=True)
class QueryTemplate:
    template_id: int
    dims: tuple[int, ...]
    styles: tuple[PredicateStyle, ...]
    selectivity: float
    sigma: float

    @property
    def dimension_count(self) -> int:
        return len(self.dims)


def load_templates(text: str | None = None) -> dict[int, QueryTemplate]:
    """Parses the template mapping; the packaged templates.cfg by default"""
    if text is None:
        text = resources.files(__package__).joinpath("templates.cfg").read_text()
    templates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            tid, selectivity, sigma, *predicates = line.split()
            dims, styles = [], []
            for predicate in predicates:
                name, _, style = predicate.partition(":")
                if name not in GMRQB_COLUMNS:
                    raise WorkloadError(f"line {lineno}: unknown attribute {name!r}")
                dims.append(GMRQB_COLUMNS.index(name))
                styles.append(PredicateStyle(style or "range"))
            template = QueryTemplate(int(tid), tuple(dims), tuple(styles), float(selectivity), float(sigma))
        except ValueError as e:
            if isinstance(e, WorkloadError):
                raise
            raise WorkloadError(f"line {lineno}: {e}")
        templates[template.template_id] = template
    return templates


def instantiate_template(template: QueryTemplate, data: DataSet, seed: int | np.random.Generator = 0) -> RangeQuery:
    """Predicates drawn from an anchor object (points) and the anchor plus a partner (ranges)"""
    bad = [d for d in template.dims if d >= data.m]
    if bad:
        raise WorkloadError(f"template {template.template_id} queries dimension {bad[0]}, data has {data.m}")
    if not data.n:
        raise WorkloadError("cannot instantiate a template over an empty dataset")
    rng = np.random.default_rng(seed)
    anchor = data.values[rng.integers(data.n)]
    partner = data.values[rng.integers(data.n)]
    lower = np.full(data.m, -np.inf, dtype=VALUE)
    upper = np.full(data.m, np.inf, dtype=VALUE)
    for d, style in zip(template.dims, template.styles):
        if style is PredicateStyle.POINT:
            lower[d] = upper[d] = anchor[d]
        else:
            lower[d] = min(anchor[d], partner[d])
            upper[d] = max(anchor[d], partner[d])
    return RangeQuery(lower, upper)


def mixed_workload(templates: Iterable[QueryTemplate], data: DataSet, per_template: int = 100,
                   seed: int = 0) -> list[tuple[int, RangeQuery]]:
    rng = np.random.default_rng(seed)
    batch = [(t.template_id, instantiate_template(t, data, rng)) for t in templates for _ in range(per_template)]
    order = rng.permutation(len(batch))
    return [batch[i] for i in order.tolist()]


def _bound(value: float) -> float | None:
    return None if math.isinf(value) else value


def write_queries(path: str | Path, queries: Iterable[RangeQuery]):
    with open(path, "w") as f:
        for query in queries:
            record = {
                "lower": [_bound(v) for v in query.lower.tolist()],
                "upper": [_bound(v) for v in query.upper.tolist()],
            }
            f.write(json.dumps(record) + "\n")


def read_queries(path: str | Path) -> list[RangeQuery]:
    queries = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                queries.append(RangeQuery.of(record["lower"], record["upper"]))
            except (KeyError, TypeError, json.JSONDecodeError) as e:
                raise WorkloadError(f"{path}:{lineno}: malformed query ({e})")
    return queries
