import struct
from dataclasses import dataclass, field, fields
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

__all__ = [
    "LANES", "DimensionMismatch", "InvalidQuery", "InvalidData", "DatasetFormatError",
    "DataSet", "RangeQuery", "ResultSet", "KernelMode", "MatchKernel", "Counters",
    "SelectivityStats", "AccessMethod", "match_scalar", "match_vectorized",
    "lane_filter", "oracle_ids", "selectivity_oracle", "write_dataset", "read_dataset",
]

LANES = 8
VALUE = np.float32


class DimensionMismatch(ValueError):
    pass


class InvalidQuery(ValueError):
    pass


class InvalidData(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DataSet:
    """n objects of m dimensions, stored row-major as 32-bit reals"""

    values: np.ndarray
    per_dim_bounds: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise InvalidData(f"expected an n×m matrix with m ≥ 1, got shape {self.values.shape}")

    @classmethod
    def from_rows(cls, rows, m: int | None = None) -> "DataSet":
        with np.errstate(over="ignore"):
            values = np.array(rows, dtype=VALUE, order="C")
        if values.size == 0:
            if m is None and values.ndim == 2:
                m = values.shape[1]
            if not m:
                raise InvalidData("an empty dataset needs an explicit dimensionality")
            values = np.empty((0, m), dtype=VALUE)
        if values.ndim != 2:
            raise InvalidData(f"rows must form a matrix, got {values.ndim} dimension(s)")
        finite = np.isfinite(values)
        if not finite.all():
            row = int(np.flatnonzero(~finite.all(axis=1))[0])
            raise InvalidData(f"non-finite value in object {row}, or one beyond the 32-bit range")
        if len(values):
            bounds = np.stack([values.min(axis=0), values.max(axis=0)], axis=1)
        else:
            bounds = np.zeros((values.shape[1], 2), dtype=VALUE)
        values.setflags(write=False)
        bounds.setflags(write=False)
        return cls(values, bounds)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @cached_property
    def columns(self) -> np.ndarray:
        """Columnar mirror, shape (m, n)"""
        cols = np.ascontiguousarray(self.values.T)
        cols.setflags(write=False)
        return cols

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, DataSet):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class RangeQuery:
    """Inclusive per-dimension [lower, upper] predicates.

    Unqueried dimensions carry the (-inf, +inf) sentinel; `queried` is derived from it.
    """

    lower: np.ndarray
    upper: np.ndarray
    queried: np.ndarray = field(init=False)

    def __post_init__(self):
        lower = np.array(self.lower, dtype=VALUE).ravel()
        upper = np.array(self.upper, dtype=VALUE).ravel()
        if lower.shape != upper.shape:
            raise InvalidQuery(f"lower has {lower.size} bounds, upper has {upper.size}")
        if lower.size < 1:
            raise InvalidQuery("a query needs at least one dimension")
        if np.isnan(lower).any() or np.isnan(upper).any():
            raise InvalidQuery("NaN query bound")
        queried = ~(np.isneginf(lower) & np.isposinf(upper))
        bad = np.flatnonzero(queried & (lower > upper))
        if bad.size:
            j = int(bad[0])
            raise InvalidQuery(f"dimension {j}: lower {lower[j]} > upper {upper[j]}")
        for arr in (lower, upper, queried):
            arr.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "queried", queried)

    @classmethod
    def of(cls, lower: Sequence[float | None], upper: Sequence[float | None]) -> "RangeQuery":
        """Builds a query where None stands for an unbounded side"""
        lo = [-np.inf if v is None else v for v in lower]
        hi = [np.inf if v is None else v for v in upper]
        return cls(np.array(lo, dtype=VALUE), np.array(hi, dtype=VALUE))

    @classmethod
    def full(cls, m: int) -> "RangeQuery":
        return cls(np.full(m, -np.inf, dtype=VALUE), np.full(m, np.inf, dtype=VALUE))

    @property
    def m(self) -> int:
        return self.lower.size

    @property
    def dims(self) -> np.ndarray:
        return np.flatnonzero(self.queried)

    def widened(self, dim: int, lower: float, upper: float) -> "RangeQuery":
        lo, hi = self.lower.copy(), self.upper.copy()
        lo[dim] = min(lo[dim], lower)
        hi[dim] = max(hi[dim], upper)
        return RangeQuery(lo, hi)

    def check(self, m: int):
        if self.m != m:
            raise DimensionMismatch(f"query has {self.m} dimensions, data has {m}")

    def __len__(self):
        return self.m


@dataclass(frozen=True, eq=False)
class ResultSet:
    """Strictly ascending object ids"""

    ids: np.ndarray

    @classmethod
    def from_sorted(cls, ids) -> "ResultSet":
        ids = np.asarray(ids, dtype=np.int64)
        ids.setflags(write=False)
        return cls(ids)

    @classmethod
    def from_unsorted(cls, ids) -> "ResultSet":
        return cls.from_sorted(np.sort(np.asarray(ids, dtype=np.int64)))

    @classmethod
    def empty(cls) -> "ResultSet":
        return cls.from_sorted(np.empty(0, dtype=np.int64))

    def is_canonical(self, n: int) -> bool:
        ids = self.ids
        if not ids.size:
            return True
        return bool((np.diff(ids) > 0).all() and ids[0] >= 0 and ids[-1] < n)

    def diff(self, other: "ResultSet") -> tuple[np.ndarray, np.ndarray]:
        """Ids only in other (missing here), ids only here (extra)"""
        return np.setdiff1d(other.ids, self.ids), np.setdiff1d(self.ids, other.ids)

    def __len__(self):
        return self.ids.size

    def __iter__(self):
        return iter(self.ids.tolist())

    def __contains__(self, item):
        i = np.searchsorted(self.ids, item)
        return i < self.ids.size and self.ids[i] == item

    def __eq__(self, other):
        if not isinstance(other, ResultSet):
            return NotImplemented
        return np.array_equal(self.ids, other.ids)

    def __repr__(self):
        return f"ResultSet({self.ids.tolist()!r})"


@dataclass
class Counters:
    """Software counters standing in for hardware performance counters"""

    objects_compared: int = 0
    early_breaks: int = 0
    nodes_visited: int = 0
    leaves_visited: int = 0
    buckets_scanned: int = 0
    columns_scanned: int = 0
    merge_chunks: int = 0

    def merge(self, other: "Counters"):
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _validate(obj, query: RangeQuery) -> np.ndarray:
    """The object as 32-bit reals, the width every stored object and query bound has"""
    values = np.asarray(obj, dtype=VALUE).ravel()
    if values.size != query.m:
        raise DimensionMismatch(f"object has {values.size} dimensions, query has {query.m}")
    return values


def match_scalar(obj, query: RangeQuery) -> bool:
    values = _validate(obj, query).tolist()
    lower, upper = query.lower.tolist(), query.upper.tolist()
    for j in range(query.m):
        if values[j] < lower[j] or values[j] > upper[j]:
            return False
    return True


def match_vectorized(obj, query: RangeQuery, lanes: int = LANES) -> bool:
    data = _validate(obj, query)
    m = data.size
    lower, upper = query.lower, query.upper
    full = (1 << lanes) - 1
    compares = (m // lanes) * lanes
    i = 0
    for i in range(0, compares, lanes):
        block = data[i:i + lanes]
        mask_lower = int(np.packbits(lower[i:i + lanes] <= block, bitorder="little")[0])
        mask_upper = int(np.packbits(upper[i:i + lanes] >= block, bitorder="little")[0])
        if mask_lower & mask_upper != full:
            return False
    for i in range(compares, m):
        if data[i] < lower[i] or data[i] > upper[i]:
            return False
    return True


def lane_filter(lows: np.ndarray, highs: np.ndarray, query: RangeQuery,
                lanes: int = LANES, counters: Counters | None = None) -> np.ndarray:
    """Positions k where query.lower <= highs[k] and lows[k] <= query.upper in every dimension.

    Rows are narrowed block by block; a row leaves the candidate set at the first
    block it fails. Points pass the same array as lows and highs.
    """
    count, m = lows.shape
    lower, upper = query.lower, query.upper
    # None while every row is still a candidate: blocks are compared on views, gathered only after a break
    candidates = None
    compares = (m // lanes) * lanes
    blocks = [slice(i, i + lanes) for i in range(0, compares, lanes)] + list(range(compares, m))
    for block in blocks:
        rows = slice(None) if candidates is None else candidates
        lo = lows[rows, block]
        hi = highs[rows, block] if highs is not lows else lo
        ok = (lower[block] <= hi) & (lo <= upper[block])
        if ok.ndim == 2:
            ok = ok.all(axis=1)
        if candidates is None:
            if ok.all():
                continue
            candidates = np.flatnonzero(ok)
        else:
            candidates = candidates[ok]
        if not candidates.size:
            break
    if candidates is None:
        candidates = np.arange(count)
    if counters is not None:
        counters.objects_compared += count
        counters.early_breaks += count - candidates.size
    return candidates


class KernelMode(Enum):
    SCALAR = "scalar"
    VECTORIZED = "vector"


@dataclass(frozen=True)
class MatchKernel:
    mode: KernelMode = KernelMode.VECTORIZED
    lane_width: int = LANES

    def match(self, obj, query: RangeQuery) -> bool:
        if self.mode is KernelMode.SCALAR:
            return match_scalar(obj, query)
        return match_vectorized(obj, query, self.lane_width)

    def select(self, rows: np.ndarray, query: RangeQuery, counters: Counters | None = None) -> np.ndarray:
        """Ascending positions of the rows matching the query"""
        if rows.shape[1] != query.m:
            raise DimensionMismatch(f"rows have {rows.shape[1]} dimensions, query has {query.m}")
        if self.mode is KernelMode.VECTORIZED:
            return lane_filter(rows, rows, query, self.lane_width, counters)

        lower, upper = query.lower.tolist(), query.upper.tolist()
        dims = range(query.m)
        hits = []
        breaks = 0
        for i, row in enumerate(rows.tolist()):
            for j in dims:
                if row[j] < lower[j] or row[j] > upper[j]:
                    breaks += 1
                    break
            else:
                hits.append(i)
        if counters is not None:
            counters.objects_compared += len(rows)
            counters.early_breaks += breaks
        return np.array(hits, dtype=np.int64)


class AccessMethod(Protocol):
    """One searchable instance built over (objects, original ids)"""

    def __len__(self) -> int: ...

    def search(self, query: RangeQuery, kernel: MatchKernel, counters: Counters | None = None) -> ResultSet: ...

    def footprint(self) -> int: ...


@dataclass(frozen=True)
class SelectivityStats:
    joint: float
    per_dim: tuple[float, ...]


def _predicate_matrix(data: DataSet, query: RangeQuery) -> np.ndarray:
    query.check(data.m)
    return (query.lower <= data.values) & (data.values <= query.upper)


def oracle_ids(data: DataSet, query: RangeQuery) -> ResultSet:
    """Ground truth: every predicate evaluated on every object"""
    if not data.n:
        query.check(data.m)
        return ResultSet.empty()
    return ResultSet.from_sorted(np.flatnonzero(_predicate_matrix(data, query).all(axis=1)))


def selectivity_oracle(data: DataSet, query: RangeQuery) -> SelectivityStats:
    if not data.n:
        query.check(data.m)
        per_dim = tuple(0.0 if q else 1.0 for q in query.queried.tolist())
        return SelectivityStats(0.0, per_dim)
    hits = _predicate_matrix(data, query)
    per_dim = hits.mean(axis=0)
    per_dim[~query.queried] = 1.0
    return SelectivityStats(float(hits.all(axis=1).mean()), tuple(per_dim.tolist()))


# "MDRQ", version, n, m
HEADER = struct.Struct("<4sIQI")
MAGIC = b"MDRQ"
FORMAT_VERSION = 1


def write_dataset(path: str | Path, data: DataSet):
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, FORMAT_VERSION, data.n, data.m))
        f.write(data.values.astype("<f4", copy=False).tobytes())


def read_dataset(path: str | Path) -> DataSet:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, version, n, m = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    expected = HEADER.size + n * m * 4
    if len(raw) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).astype(VALUE).reshape(n, m)
    return DataSet.from_rows(values, m=m)
