import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from loguru import logger

from .core import VALUE, Counters, DimensionMismatch, MatchKernel, RangeQuery, ResultSet

__all__ = ["BITS", "INTERVALS", "VaGrid", "CellCode", "Bucket", "VaOccupancy", "Enumeration", "VaFile"]

BITS = 2
INTERVALS = 1 << BITS
PER_BYTE = 8 // BITS


@dataclass(frozen=True, eq=False)
class VaGrid:
    """Equal-width intervals per dimension over the observed value range"""

    lows: np.ndarray
    highs: np.ndarray

    @classmethod
    def from_objects(cls, objects: np.ndarray) -> "VaGrid":
        if len(objects):
            return cls(objects.min(axis=0).astype(np.float64), objects.max(axis=0).astype(np.float64))
        m = objects.shape[1]
        return cls(np.zeros(m), np.zeros(m))

    @property
    def m(self) -> int:
        return self.lows.size

    @property
    def bits(self) -> int:
        return BITS * self.m

    @property
    def cells(self) -> int:
        return INTERVALS ** self.m

    def indices(self, values: np.ndarray) -> np.ndarray:
        """Interval index of every value; values outside the range clamp to the outer intervals"""
        values = np.asarray(values, dtype=np.float64)
        width = self.highs - self.lows
        clamped = np.clip(values, self.lows, self.highs)
        safe = np.where(width > 0, width, 1.0)
        idx = np.floor(INTERVALS * (clamped - self.lows) / safe)
        idx = np.where(width > 0, idx, 0)
        return np.minimum(idx, INTERVALS - 1).astype(np.uint8)

    def approximate(self, obj) -> "CellCode":
        obj = np.asarray(obj, dtype=VALUE)
        if obj.size != self.m:
            raise DimensionMismatch(f"object has {obj.size} dimensions, grid has {self.m}")
        outside = (obj < self.lows) | (obj > self.highs)
        if outside.any():
            logger.warning("clamping {} value(s) outside the grid range", int(outside.sum()))
        return CellCode.pack(self.indices(obj))

    def query_ranges(self, query: RangeQuery) -> tuple[np.ndarray, np.ndarray] | None:
        """Admissible interval indices [li, ui] per dimension, None if the query misses the grid"""
        if (query.upper < self.lows).any() or (query.lower > self.highs).any():
            return None
        return self.indices(query.lower), self.indices(query.upper)


def _pack(indices: np.ndarray) -> np.ndarray:
    """Packs rows of 2-bit indices, four per byte"""
    indices = np.atleast_2d(indices).astype(np.uint8)
    n, m = indices.shape
    width = -(-m // PER_BYTE) * PER_BYTE
    padded = np.zeros((n, width), dtype=np.uint8)
    padded[:, :m] = indices
    grouped = padded.reshape(n, -1, PER_BYTE)
    shifts = np.arange(PER_BYTE, dtype=np.uint8) * BITS
    return np.bitwise_or.reduce(grouped << shifts, axis=2).astype(np.uint8)


@dataclass(frozen=True)
class CellCode:
    packed: bytes
    m: int

    @classmethod
    def pack(cls, indices) -> "CellCode":
        indices = np.asarray(indices, dtype=np.uint8)
        return cls(_pack(indices)[0].tobytes(), indices.size)

    def indices(self) -> np.ndarray:
        raw = np.frombuffer(self.packed, dtype=np.uint8)
        shifts = np.arange(PER_BYTE, dtype=np.uint8) * BITS
        return ((raw[:, None] >> shifts) & (INTERVALS - 1)).ravel()[:self.m].astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Bucket:
    ids: np.ndarray
    objects: np.ndarray

    def __len__(self):
        return self.ids.size


@dataclass(frozen=True)
class VaOccupancy:
    cells: int
    occupied: int
    smallest: int
    mean: float
    largest: int


class Enumeration(Enum):
    AUTO = "auto"
    CARTESIAN = "cartesian"
    OCCUPIED = "occupied"


class VaFile:
    """Grid approximation with 2 bits per dimension and a sparse bucket directory"""

    def __init__(self, grid: VaGrid, buckets: dict[bytes, Bucket]):
        self.grid = grid
        self.buckets = buckets
        self.keys = list(buckets)
        self.cell_indices = np.array([CellCode(key, grid.m).indices() for key in self.keys],
                                     dtype=np.uint8).reshape(len(self.keys), grid.m)

    @classmethod
    def build(cls, objects: np.ndarray, ids: np.ndarray) -> "VaFile":
        objects = np.asarray(objects, dtype=VALUE)
        ids = np.asarray(ids, dtype=np.int64)
        grid = VaGrid.from_objects(objects)
        buckets = {}
        if len(objects):
            codes = _pack(grid.indices(objects))
            unique, inverse = np.unique(codes, axis=0, return_inverse=True)
            inverse = inverse.ravel()
            order = np.argsort(inverse, kind="stable")
            starts = np.searchsorted(inverse[order], np.arange(len(unique) + 1))
            for c, key in enumerate(unique):
                members = order[starts[c]:starts[c + 1]]
                buckets[key.tobytes()] = Bucket(ids[members], objects[members])
        logger.debug("VA-file: {} objects in {} of {} cells", len(objects), len(buckets), grid.cells)
        return cls(grid, buckets)

    def __len__(self):
        return sum(len(bucket) for bucket in self.buckets.values())

    def candidates(self, query: RangeQuery, enumeration: Enumeration = Enumeration.AUTO) -> list[bytes]:
        """Occupied cells whose index lies in the admissible range in every dimension"""
        ranges = self.grid.query_ranges(query)
        if ranges is None or not self.keys:
            return []
        li, ui = ranges
        product = math.prod((ui.astype(int) - li + 1).tolist())
        if enumeration is Enumeration.AUTO:
            enumeration = Enumeration.OCCUPIED if product > len(self.keys) else Enumeration.CARTESIAN

        if enumeration is Enumeration.OCCUPIED:
            inside = ((self.cell_indices >= li) & (self.cell_indices <= ui)).all(axis=1)
            return [self.keys[i] for i in np.flatnonzero(inside).tolist()]

        axes = [range(lo, hi + 1) for lo, hi in zip(li.tolist(), ui.tolist())]
        found = []
        for cell in itertools.product(*axes):
            key = CellCode.pack(cell).packed
            if key in self.buckets:
                found.append(key)
        return found

    def search(self, query: RangeQuery, kernel: MatchKernel = MatchKernel(),
               counters: Counters | None = None, enumeration: Enumeration = Enumeration.AUTO) -> ResultSet:
        if query.m != self.grid.m:
            raise DimensionMismatch(f"query has {query.m} dimensions, grid has {self.grid.m}")
        keys = self.candidates(query, enumeration)
        hits = []
        for key in keys:
            bucket = self.buckets[key]
            hits.append(bucket.ids[kernel.select(bucket.objects, query, counters)])
        if counters is not None:
            counters.buckets_scanned += len(keys)
        if not hits:
            return ResultSet.empty()
        return ResultSet.from_unsorted(np.concatenate(hits))

    def occupancy(self) -> VaOccupancy:
        sizes = [len(bucket) for bucket in self.buckets.values()]
        if not sizes:
            return VaOccupancy(self.grid.cells, 0, 0, 0.0, 0)
        return VaOccupancy(self.grid.cells, len(sizes), min(sizes), sum(sizes) / len(sizes), max(sizes))

    def audit(self, expected: int | None = None) -> list[str]:
        problems = []
        total = 0
        for key, bucket in self.buckets.items():
            total += len(bucket)
            codes = _pack(self.grid.indices(bucket.objects))
            if not (codes == np.frombuffer(key, dtype=np.uint8)).all():
                problems.append(f"bucket {key.hex()} holds objects approximated elsewhere")
        if expected is not None and total != expected:
            problems.append(f"buckets hold {total} objects, expected {expected}")
        return problems

    def footprint(self) -> int:
        # per occupied cell: packed key, unpacked indices and a directory slot
        key = -(-self.grid.bits // 8)
        directory = len(self.keys) * (key + self.grid.m + 8)
        return sum(b.ids.nbytes + b.objects.nbytes for b in self.buckets.values()) + directory
