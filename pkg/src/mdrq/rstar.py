"""
R*-tree over points with forced reinsertion, kept entirely in memory.

Leaf entries are points stored as degenerate rectangles (low == high), so one
bounding-box code path serves every level.
"""

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from loguru import logger

from .core import LANES, VALUE, Counters, DimensionMismatch, KernelMode, MatchKernel, RangeQuery, ResultSet, \
    lane_filter

__all__ = ["Mbr", "RNode", "RStarConfig", "RStarStats", "RStarTree", "mbr_intersects"]


@dataclass(frozen=True)
class RStarConfig:
    leaf_capacity: int = 96
    inner_capacity: int = 96
    min_fill: float = 0.4
    reinsert_fraction: float = 0.3
    # compare 4 lanes per block, as with 64-bit coordinates
    double_lanes: bool = False

    def __post_init__(self):
        if min(self.leaf_capacity, self.inner_capacity) < 2:
            raise ValueError("node capacities must be at least 2")
        if not 0 < self.min_fill <= 0.5:
            raise ValueError(f"min fill must lie in (0, 0.5], got {self.min_fill}")
        if not 0 <= self.reinsert_fraction < 1:
            raise ValueError(f"reinsert fraction must lie in [0, 1), got {self.reinsert_fraction}")

    def capacity(self, level: int) -> int:
        return self.leaf_capacity if level == 0 else self.inner_capacity

    def min_entries(self, level: int) -> int:
        return max(1, int(self.min_fill * self.capacity(level)))

    @property
    def lanes(self) -> int:
        return LANES // 2 if self.double_lanes else LANES


@dataclass(frozen=True, eq=False)
class Mbr:
    low: np.ndarray
    high: np.ndarray

    @classmethod
    def point(cls, obj) -> "Mbr":
        p = np.asarray(obj, dtype=VALUE)
        return cls(p, p)

    @property
    def m(self) -> int:
        return self.low.size

    def contains(self, other: "Mbr") -> bool:
        return bool((self.low <= other.low).all() and (other.high <= self.high).all())

    def area(self) -> float:
        return float(np.prod(self.high.astype(np.float64) - self.low))

    def margin(self) -> float:
        return float(np.sum(self.high.astype(np.float64) - self.low))

    def __eq__(self, other):
        if not isinstance(other, Mbr):
            return NotImplemented
        return np.array_equal(self.low, other.low) and np.array_equal(self.high, other.high)


def mbr_intersects(mbr: Mbr, query: RangeQuery, lanes: int = LANES) -> bool:
    """Touching boundaries intersect; blocks of `lanes` dimensions, early exit on the first failing block"""
    m = mbr.m
    if m != query.m:
        raise DimensionMismatch(f"box has {m} dimensions, query has {query.m}")
    full = (1 << lanes) - 1
    compares = (m // lanes) * lanes
    for i in range(0, compares, lanes):
        s = slice(i, i + lanes)
        mask_lower = int(np.packbits(query.lower[s] <= mbr.high[s], bitorder="little")[0])
        mask_upper = int(np.packbits(query.upper[s] >= mbr.low[s], bitorder="little")[0])
        if mask_lower & mask_upper != full:
            return False
    for i in range(compares, m):
        if query.lower[i] > mbr.high[i] or query.upper[i] < mbr.low[i]:
            return False
    return True


class RNode:
    """Entries as parallel low/high rows plus items (object ids at leaves, child nodes above)"""

    __slots__ = ("level", "lows", "highs", "items")

    def __init__(self, level: int, m: int, capacity: int):
        self.level = level
        self.lows = np.empty((capacity + 1, m), dtype=VALUE)
        self.highs = np.empty((capacity + 1, m), dtype=VALUE)
        self.items: list = []

    @property
    def leaf(self) -> bool:
        return self.level == 0

    def __len__(self):
        return len(self.items)

    def append(self, low: np.ndarray, high: np.ndarray, item):
        c = len(self.items)
        self.lows[c] = low
        self.highs[c] = high
        self.items.append(item)

    def set_box(self, i: int, box: Mbr):
        self.lows[i] = box.low
        self.highs[i] = box.high

    def keep(self, positions: np.ndarray):
        k = positions.size
        self.lows[:k] = self.lows[positions]
        self.highs[:k] = self.highs[positions]
        self.items = [self.items[i] for i in positions.tolist()]

    def entries(self) -> tuple[np.ndarray, np.ndarray]:
        c = len(self.items)
        return self.lows[:c], self.highs[:c]

    def mbr(self) -> Mbr:
        lows, highs = self.entries()
        return Mbr(lows.min(axis=0), highs.max(axis=0))


def _volume(lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    return np.prod(np.maximum(highs - lows, 0.0), axis=-1)


def _margin(lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    return np.sum(highs - lows, axis=-1)


@dataclass(frozen=True)
class RStarStats:
    height: int
    nodes: int
    leaves: int
    entries: int
    occupancy: dict[int, int]
    overlap: float


class RStarTree:
    def __init__(self, m: int, config: RStarConfig = RStarConfig()):
        if m < 1:
            raise ValueError(f"dimensionality must be at least 1, got {m}")
        self.m = m
        self.config = config
        self.root = RNode(0, m, config.leaf_capacity)
        self.size = 0
        self.splits = 0
        self.reinsertions = 0
        self.reinserted_entries = 0
        self._overflowed: set[int] = set()
        self._pending: list[tuple[np.ndarray, np.ndarray, object, int]] = []

    @classmethod
    def build(cls, objects: np.ndarray, ids: np.ndarray, seed: int = 0,
              config: RStarConfig = RStarConfig()) -> "RStarTree":
        """Incremental insertion in a seeded random order; no bulk loading"""
        objects = np.asarray(objects, dtype=VALUE)
        tree = cls(objects.shape[1], config)
        ids = np.asarray(ids)
        for i in np.random.default_rng(seed).permutation(len(objects)).tolist():
            tree.insert(objects[i], int(ids[i]))
        logger.debug("R*-tree: {} entries, height {}, {} splits, {} reinsertions",
                     tree.size, tree.root.level + 1, tree.splits, tree.reinsertions)
        return tree

    def __len__(self):
        return self.size

    def insert(self, obj, object_id: int):
        point = np.asarray(obj, dtype=VALUE)
        if point.size != self.m:
            raise DimensionMismatch(f"object has {point.size} dimensions, tree has {self.m}")
        self._overflowed = set()
        self._insert(point, point, int(object_id), 0)
        while self._pending:
            self._insert(*self._pending.pop(0))
        self.size += 1

    def _insert(self, low: np.ndarray, high: np.ndarray, item, level: int):
        sibling = self._insert_into(self.root, low, high, item, level)
        if sibling is not None:
            old = self.root
            root = RNode(old.level + 1, self.m, self.config.inner_capacity)
            root.append(*self._box_of(old), old)
            root.append(*self._box_of(sibling), sibling)
            self.root = root

    @staticmethod
    def _box_of(node: RNode) -> tuple[np.ndarray, np.ndarray]:
        box = node.mbr()
        return box.low, box.high

    def _insert_into(self, node: RNode, low, high, item, level: int) -> RNode | None:
        if node.level == level:
            node.append(low, high, item)
        else:
            i = self._choose_subtree(node, low, high)
            child = node.items[i]
            sibling = self._insert_into(child, low, high, item, level)
            node.set_box(i, child.mbr())
            if sibling is not None:
                node.append(*self._box_of(sibling), sibling)

        if len(node) > self.config.capacity(node.level):
            return self._overflow(node)
        return None

    def _choose_subtree(self, node: RNode, low, high) -> int:
        lows, highs = node.entries()
        lows = lows.astype(np.float64)
        highs = highs.astype(np.float64)
        grown_lows = np.minimum(lows, low)
        grown_highs = np.maximum(highs, high)
        area = _volume(lows, highs)
        enlargement = _volume(grown_lows, grown_highs) - area

        if node.level == 1:
            # children are leaves: least overlap enlargement first
            before = self._overlaps(lows, highs, lows, highs)
            after = self._overlaps(grown_lows, grown_highs, lows, highs)
            order = np.lexsort((area, enlargement, after - before))
        else:
            order = np.lexsort((area, enlargement))
        return int(order[0])

    @staticmethod
    def _overlaps(lows, highs, other_lows, other_highs) -> np.ndarray:
        """Sum of each box's overlap volume with every other entry"""
        inter_lows = np.maximum(lows[:, None, :], other_lows[None, :, :])
        inter_highs = np.minimum(highs[:, None, :], other_highs[None, :, :])
        volumes = _volume(inter_lows, inter_highs)
        np.fill_diagonal(volumes, 0.0)
        return volumes.sum(axis=1)

    def _overflow(self, node: RNode) -> RNode | None:
        if node.level not in self._overflowed and self.config.reinsert_fraction > 0:
            self._overflowed.add(node.level)
            self._reinsert(node)
            return None
        return self._split(node)

    def _reinsert(self, node: RNode):
        lows, highs = node.entries()
        count = len(node)
        p = min(math.ceil(self.config.reinsert_fraction * count), count - self.config.min_entries(node.level))
        box = node.mbr()
        center = (box.low.astype(np.float64) + box.high) / 2
        centers = (lows.astype(np.float64) + highs) / 2
        distance = np.sum((centers - center) ** 2, axis=1)
        farthest = np.argsort(-distance, kind="stable")
        removed = farthest[:p]

        # close reinsert: nearest of the removed entries goes back first
        for i in removed[::-1].tolist():
            self._pending.append((lows[i].copy(), highs[i].copy(), node.items[i], node.level))
        node.keep(np.sort(farthest[p:]))
        self.reinsertions += 1
        self.reinserted_entries += p

    def _split(self, node: RNode) -> RNode:
        lows, highs = node.entries()
        lows = lows.astype(np.float64)
        highs = highs.astype(np.float64)
        count = len(node)
        k = self.config.min_entries(node.level)
        sizes = np.arange(k, count - k + 1)

        def distributions(axis: int):
            for order in (np.lexsort((highs[:, axis], lows[:, axis])), np.lexsort((lows[:, axis], highs[:, axis]))):
                sl, sh = lows[order], highs[order]
                head_lows = np.minimum.accumulate(sl, axis=0)[sizes - 1]
                head_highs = np.maximum.accumulate(sh, axis=0)[sizes - 1]
                tail_lows = np.minimum.accumulate(sl[::-1], axis=0)[::-1][sizes]
                tail_highs = np.maximum.accumulate(sh[::-1], axis=0)[::-1][sizes]
                yield order, head_lows, head_highs, tail_lows, tail_highs

        best_axis, best_margin = 0, math.inf
        for axis in range(self.m):
            margin = sum(float(_margin(hl, hh).sum() + _margin(tl, th).sum())
                         for _, hl, hh, tl, th in distributions(axis))
            if margin < best_margin:
                best_axis, best_margin = axis, margin

        best = None
        for order, hl, hh, tl, th in distributions(best_axis):
            overlap = _volume(np.maximum(hl, tl), np.minimum(hh, th))
            area = _volume(hl, hh) + _volume(tl, th)
            i = int(np.lexsort((area, overlap))[0])
            key = (overlap[i], area[i])
            if best is None or key < best[0]:
                best = (key, order, int(sizes[i]))
        _, order, size = best

        sibling = RNode(node.level, self.m, self.config.capacity(node.level))
        for i in order[size:].tolist():
            sibling.append(node.lows[i], node.highs[i], node.items[i])
        node.keep(order[:size])
        self.splits += 1
        return sibling

    def search(self, query: RangeQuery, kernel: MatchKernel = MatchKernel(),
               counters: Counters | None = None) -> ResultSet:
        if query.m != self.m:
            raise DimensionMismatch(f"query has {query.m} dimensions, tree has {self.m}")
        if not self.size:
            return ResultSet.empty()

        lanes = self.config.lanes
        scalar = kernel.mode is KernelMode.SCALAR
        local = Counters()
        hits = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            local.nodes_visited += 1
            lows, highs = node.entries()
            if node.leaf:
                local.leaves_visited += 1
                matched = kernel.select(lows, query, local)
                hits.extend(node.items[i] for i in matched.tolist())
            elif scalar:
                stack.extend(child for i, child in enumerate(node.items)
                             if mbr_intersects(Mbr(lows[i], highs[i]), query, lanes))
            else:
                stack.extend(node.items[i] for i in lane_filter(lows, highs, query, lanes).tolist())

        if counters is not None:
            counters.merge(local)
        return ResultSet.from_unsorted(hits)

    def nodes(self):
        """Depth-first (node, depth) pairs"""
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            if not node.leaf:
                stack.extend((child, depth + 1) for child in node.items)

    def audit(self) -> list[str]:
        """Containment, minimality, balance and fill checks over the whole tree"""
        problems = []
        height = self.root.level
        entries = 0
        for node, depth in self.nodes():
            count = len(node)
            if node.level != height - depth:
                problems.append(f"node at depth {depth} has level {node.level}, expected {height - depth}")
            if count > self.config.capacity(node.level):
                problems.append(f"level {node.level} node holds {count} entries")
            if node is not self.root and count < self.config.min_entries(node.level):
                problems.append(f"level {node.level} node under-filled with {count} entries")
            lows, highs = node.entries()
            if node.leaf:
                entries += count
                if not np.array_equal(lows, highs):
                    problems.append("leaf entry is not a degenerate point box")
                continue
            for i, child in enumerate(node.items):
                if not len(child):
                    problems.append(f"empty child under level {node.level}")
                    continue
                box = child.mbr()
                stored = Mbr(lows[i], highs[i])
                if not stored.contains(box):
                    problems.append(f"level {node.level} entry {i} does not contain its child")
                elif stored != box:
                    problems.append(f"level {node.level} entry {i} is not minimal")
        if entries != self.size:
            problems.append(f"{entries} leaf entries for {self.size} inserted objects")
        return problems

    def stats(self) -> RStarStats:
        nodes = leaves = entries = 0
        occupancy = Counter()
        overlap = 0.0
        for node, _ in self.nodes():
            nodes += 1
            occupancy[len(node)] += 1
            if node.leaf:
                leaves += 1
                entries += len(node)
            elif len(node) > 1:
                lows, highs = node.entries()
                lows = lows.astype(np.float64)
                highs = highs.astype(np.float64)
                overlap += float(self._overlaps(lows, highs, lows, highs).sum()) / 2
        return RStarStats(self.root.level + 1, nodes, leaves, entries, dict(sorted(occupancy.items())), overlap)

    def footprint(self) -> int:
        total = 0
        for node, _ in self.nodes():
            total += node.lows.nbytes + node.highs.nbytes + 8 * len(node)
        return total
