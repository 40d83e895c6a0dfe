from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from loguru import logger

from .core import VALUE, Counters, DimensionMismatch, KernelMode, MatchKernel, RangeQuery, ResultSet, match_scalar

__all__ = ["KdNode", "KdTree"]

NIL = -1


class KdNode(NamedTuple):
    object_id: int
    object: tuple[float, ...]
    delimiter_dim: int
    left: int | None
    right: int | None


@dataclass
class _Bound:
    low: float
    high: float


class KdTree:
    """kd-tree holding one object per node, delimiter dimensions chosen round-robin.

    Nodes live in a contiguous pool in insertion order; left/right are pool positions.
    Values equal to a node's delimiter value go left.
    """

    def __init__(self, m: int):
        if m < 1:
            raise ValueError(f"dimensionality must be at least 1, got {m}")
        self.m = m
        self.rows: list[list[float]] = []
        self.ids: list[int] = []
        self.dims: list[int] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.max_depth = 0
        self._array: np.ndarray | None = None
        self._id_array: np.ndarray | None = None

    @classmethod
    def build(cls, objects: np.ndarray, ids: np.ndarray, seed: int = 0) -> "KdTree":
        """Inserts every object one by one in a seeded random order"""
        objects = np.asarray(objects, dtype=VALUE)
        tree = cls(objects.shape[1])
        order = np.random.default_rng(seed).permutation(len(objects))
        rows = objects.tolist()
        ids = np.asarray(ids).tolist()
        for i in order.tolist():
            tree.insert(rows[i], ids[i])
        logger.debug("kd-tree: {} nodes, depth {}", len(tree), tree.max_depth)
        return tree

    def __len__(self):
        return len(self.ids)

    def insert(self, obj, object_id: int):
        if len(obj) != self.m:
            raise DimensionMismatch(f"object has {len(obj)} dimensions, tree has {self.m}")
        row = [float(v) for v in np.asarray(obj, dtype=VALUE).tolist()]
        new = len(self.ids)
        self._array = self._id_array = None

        if new == 0:
            self._append(row, object_id, 0)
            self.max_depth = max(self.max_depth, 1)
            return

        node, depth = 0, 1
        while True:
            d = self.dims[node]
            if row[d] <= self.rows[node][d]:
                if self.left[node] == NIL:
                    self.left[node] = new
                    break
                node = self.left[node]
            else:
                if self.right[node] == NIL:
                    self.right[node] = new
                    break
                node = self.right[node]
            depth += 1
        self._append(row, object_id, depth % self.m)
        self.max_depth = max(self.max_depth, depth + 1)

    def _append(self, row, object_id, dim):
        self.rows.append(row)
        self.ids.append(int(object_id))
        self.dims.append(dim)
        self.left.append(NIL)
        self.right.append(NIL)

    def node(self, i: int) -> KdNode:
        return KdNode(
            self.ids[i], tuple(self.rows[i]), self.dims[i],
            None if self.left[i] == NIL else self.left[i],
            None if self.right[i] == NIL else self.right[i],
        )

    def search(self, query: RangeQuery, kernel: MatchKernel = MatchKernel(),
               counters: Counters | None = None) -> ResultSet:
        if query.m != self.m:
            raise DimensionMismatch(f"query has {query.m} dimensions, tree has {self.m}")
        if not self.ids:
            return ResultSet.empty()

        lower, upper = query.lower.tolist(), query.upper.tolist()
        scalar = kernel.mode is KernelMode.SCALAR
        hits = []
        visited = []
        stack = [0]
        while stack:
            node = stack.pop()
            visited.append(node)
            row = self.rows[node]
            if scalar and match_scalar(row, query):
                hits.append(self.ids[node])
            d = self.dims[node]
            if self.right[node] != NIL and upper[d] > row[d]:
                stack.append(self.right[node])
            if self.left[node] != NIL and lower[d] <= row[d]:
                stack.append(self.left[node])

        # descent depends only on delimiter values, so the visited objects are matched as one block
        if not scalar:
            nodes = np.array(visited, dtype=np.int64)
            matched = nodes[kernel.select(self.array()[nodes], query)]
            hits = self.id_array()[matched]

        if counters is not None:
            counters.nodes_visited += len(visited)
            counters.objects_compared += len(visited)
            counters.early_breaks += len(visited) - len(hits)
        return ResultSet.from_unsorted(hits)

    def array(self) -> np.ndarray:
        if self._array is None:
            self._array = np.array(self.rows, dtype=VALUE).reshape(-1, self.m)
        return self._array

    def id_array(self) -> np.ndarray:
        if self._id_array is None:
            self._id_array = np.array(self.ids, dtype=np.int64)
        return self._id_array

    def audit(self) -> list[str]:
        """Checks the ≤/> split per delimiter dimension over every subtree, plus id conservation"""
        problems = []
        if len(set(self.ids)) != len(self.ids):
            problems.append("duplicate object ids")
        if not self.ids:
            return problems

        seen = 0
        stack = [(0, [_Bound(-np.inf, np.inf) for _ in range(self.m)])]
        while stack:
            node, bounds = stack.pop()
            seen += 1
            row = self.rows[node]
            for j, bound in enumerate(bounds):
                if not bound.low < row[j] <= bound.high:
                    problems.append(f"node {node}: value {row[j]} in dim {j} outside ({bound.low}, {bound.high}]")
            d = self.dims[node]
            for child, side in ((self.left[node], "left"), (self.right[node], "right")):
                if child == NIL:
                    continue
                if self.dims[child] != (d + 1) % self.m:
                    problems.append(f"node {child}: delimiter {self.dims[child]} after {d}")
                narrowed = [_Bound(b.low, b.high) for b in bounds]
                if side == "left":
                    narrowed[d].high = min(narrowed[d].high, row[d])
                else:
                    narrowed[d].low = max(narrowed[d].low, row[d])
                stack.append((child, narrowed))
        if seen != len(self.ids):
            problems.append(f"reached {seen} of {len(self.ids)} nodes")
        return problems

    def footprint(self) -> int:
        # object row, id, delimiter and two child links per node
        return len(self.ids) * (self.m * 4 + 8 + 4 + 2 * 4)
