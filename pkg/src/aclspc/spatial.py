"""Exact nearest-neighbour search over a static point set.

The kd-tree splits each node at the median of its widest axis. Queries are
exact, and equal distances resolve to the lowest point index so that results
(and the Chamfer gradients built on them) are reproducible and match
:func:`brute_force_nearest` bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .core import as_cloud

LEAF_SIZE = 8


@nb.njit(cache=True)
def _build(points, leaf_size):
    n = points.shape[0]
    perm = np.arange(n)
    max_nodes = 2 * (n // leaf_size + 1) * 2 + 1
    start = np.empty(max_nodes, np.int64)
    end = np.empty(max_nodes, np.int64)
    axis = np.full(max_nodes, -1, np.int64)
    split = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)

    start[0] = 0
    end[0] = n
    n_nodes = 1
    stack = np.empty(max_nodes, np.int64)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s = start[node]
        e = end[node]
        if e - s <= leaf_size:
            continue
        best_axis = 0
        best_spread = -1.0
        for a in range(3):
            lo = np.inf
            hi = -np.inf
            for k in range(s, e):
                v = points[perm[k], a]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if hi - lo > best_spread:
                best_spread = hi - lo
                best_axis = a
        if best_spread <= 0.0:
            # all points coincide; keep as a leaf
            continue
        seg = perm[s:e].copy()
        # stable sort keeps index order among equal coordinates
        order = np.argsort(points[seg, best_axis], kind="mergesort")
        perm[s:e] = seg[order]
        mid = (s + e) // 2
        axis[node] = best_axis
        split[node] = points[perm[mid], best_axis]
        l = n_nodes
        r = n_nodes + 1
        n_nodes += 2
        start[l] = s
        end[l] = mid
        start[r] = mid
        end[r] = e
        left[node] = l
        right[node] = r
        stack[sp] = l
        stack[sp + 1] = r
        sp += 2
    return perm, start[:n_nodes], end[:n_nodes], axis[:n_nodes], split[:n_nodes], left[:n_nodes], right[:n_nodes]


@nb.njit(cache=True)
def _query(ordered, perm, start, end, axis, split, left, right, queries):
    m = queries.shape[0]
    out_idx = np.empty(m, np.int64)
    out_dist = np.empty(m, np.float64)
    depth_cap = start.shape[0] + 1
    stack = np.empty(depth_cap, np.int64)
    bound = np.empty(depth_cap, np.float64)
    for qi in range(m):
        qx = queries[qi, 0]
        qy = queries[qi, 1]
        qz = queries[qi, 2]
        best = np.inf
        best_i = -1
        sp = 1
        stack[0] = 0
        bound[0] = 0.0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            node_bound = bound[sp]
            if node_bound > best:
                continue
            a = axis[node]
            if a < 0:
                for k in range(start[node], end[node]):
                    dx = ordered[k, 0] - qx
                    dy = ordered[k, 1] - qy
                    dz = ordered[k, 2] - qz
                    d = dx * dx + dy * dy + dz * dz
                    if d < best or (d == best and perm[k] < best_i):
                        best = d
                        best_i = perm[k]
                continue
            diff = queries[qi, a] - split[node]
            if diff < 0.0:
                near = left[node]
                far = right[node]
            else:
                near = right[node]
                far = left[node]
            # far side pushed first so the near side is explored first
            # every point of the far child lies at least |diff| away along this axis
            stack[sp] = far
            bound[sp] = max(node_bound, diff * diff)
            stack[sp + 1] = near
            bound[sp + 1] = node_bound
            sp += 2
        out_idx[qi] = best_i
        out_dist[qi] = np.sqrt(best)
    return out_idx, out_dist


@nb.njit(cache=True)
def _brute(points, queries):
    m = queries.shape[0]
    out_idx = np.empty(m, np.int64)
    out_dist = np.empty(m, np.float64)
    for qi in range(m):
        best = np.inf
        best_i = -1
        for i in range(points.shape[0]):
            dx = points[i, 0] - queries[qi, 0]
            dy = points[i, 1] - queries[qi, 1]
            dz = points[i, 2] - queries[qi, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
                best_i = i
        out_idx[qi] = best_i
        out_dist[qi] = np.sqrt(best)
    return out_idx, out_dist


@dataclass(frozen=True)
class NearestNeighborIndex:
    points: np.ndarray
    ordered: np.ndarray  # points[perm], so each leaf is a contiguous block
    perm: np.ndarray
    start: np.ndarray
    end: np.ndarray
    axis: np.ndarray
    split: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Nearest target index and Euclidean distance for each row of ``queries``."""
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        return _query(self.ordered, self.perm, self.start, self.end, self.axis,
                      self.split, self.left, self.right, q)


def build_index(target) -> NearestNeighborIndex:
    pts = as_cloud(target, copy=True)
    pts.setflags(write=False)
    perm, *nodes = _build(pts, LEAF_SIZE)
    return NearestNeighborIndex(pts, np.ascontiguousarray(pts[perm]), perm, *nodes)


def query_nearest(index: NearestNeighborIndex, q) -> tuple[int, float]:
    idx, dist = index.query(np.asarray(q, dtype=np.float64).reshape(1, 3))
    return int(idx[0]), float(dist[0])


def brute_force_nearest(target, q) -> tuple[int, float]:
    """Exhaustive-scan reference for :func:`query_nearest`."""
    pts = as_cloud(target)
    idx, dist = _brute(pts, np.asarray(q, dtype=np.float64).reshape(1, 3))
    return int(idx[0]), float(dist[0])


def brute_force_query(target, queries) -> tuple[np.ndarray, np.ndarray]:
    pts = as_cloud(target)
    return _brute(pts, np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3))
