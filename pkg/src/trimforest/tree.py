"""CART regression trees that remember their construction history.

A fitted :class:`Tree` is a flat arena of nodes (parallel numpy arrays)
plus ``split_order``, the internal node ids in the order their splits were
committed.  Every node carries the sufficient statistics needed to prune
the tree later without touching the data again.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .dataset import Dataset

LEAF = -1


class SplitPoint(NamedTuple):
    feature: int
    threshold: float


class NodeStats(NamedTuple):
    count: int
    sum_y: float
    sum_y2: float
    sse: float
    mean: float


class Node(NamedTuple):
    id: int
    stats: NodeStats
    split: SplitPoint | None
    left: int | None
    right: int | None
    parent: int | None

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass(frozen=True)
class TreeConfig:
    """Growth parameters.

    ``min_node_size`` gates which nodes may be split; children can end up
    smaller.  ``mtry=None`` means ``max(1, d // 3)``.
    """

    min_node_size: int = 5
    mtry: int | None = None
    seed: int = 0

    def resolve_mtry(self, d: int) -> int:
        mtry = max(1, d // 3) if self.mtry is None else int(self.mtry)
        if not 1 <= mtry <= d:
            raise ValueError(f"mtry must lie in [1, {d}], got {mtry}")
        return mtry

    def __post_init__(self):
        if self.min_node_size < 2:
            raise ValueError(f"min_node_size must be >= 2, got {self.min_node_size}")


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    parent: np.ndarray
    count: np.ndarray
    sum_y: np.ndarray
    sum_y2: np.ndarray
    sse: np.ndarray
    mean: np.ndarray
    split_order: np.ndarray

    root = 0

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def K(self) -> int:
        return self.split_order.shape[0]

    @property
    def n_leaves(self) -> int:
        return self.K + 1

    def is_leaf(self, i: int) -> bool:
        return self.left[i] == LEAF

    def node(self, i: int) -> Node:
        stats = NodeStats(int(self.count[i]), float(self.sum_y[i]), float(self.sum_y2[i]),
                          float(self.sse[i]), float(self.mean[i]))
        if self.left[i] == LEAF:
            split = left = right = None
        else:
            split = SplitPoint(int(self.feature[i]), float(self.threshold[i]))
            left, right = int(self.left[i]), int(self.right[i])
        parent = None if self.parent[i] == LEAF else int(self.parent[i])
        return Node(i, stats, split, left, right, parent)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return self.mean[route(self, X)]

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in _ARRAY_FIELDS}

    def identical_to(self, other: "Tree") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _ARRAY_FIELDS)


_ARRAY_FIELDS = ("feature", "threshold", "left", "right", "parent", "count",
                 "sum_y", "sum_y2", "sse", "mean", "split_order")

# A split must remove more than this fraction of the node SSE; anything
# smaller is floating-point noise from children with equal means.
MIN_RELATIVE_GAIN = 1e-12


@njit(cache=True, nogil=True)
def _find_split(X, y, seg, features, total_sum, node_sse):
    c = seg.shape[0]
    vals = np.empty(c)
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    for f in features:
        for i in range(c):
            vals[i] = X[seg[i], f]
        order = np.argsort(vals, kind="mergesort")
        s_left = 0.0
        for i in range(c - 1):
            s_left += y[seg[order[i]]]
            a = vals[order[i]]
            b = vals[order[i + 1]]
            if a < b:
                nl = i + 1
                nr = c - nl
                diff = s_left / nl - (total_sum - s_left) / nr
                gain = nl * nr / c * diff * diff
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    thr = 0.5 * (a + b)
                    if not a < thr:
                        thr = b
                    best_thr = thr
    if best_gain <= MIN_RELATIVE_GAIN * node_sse:
        return -1, 0.0
    return best_f, best_thr


@njit(cache=True, nogil=True)
def _node_stats(y, seg):
    c = seg.shape[0]
    s = 0.0
    s2 = 0.0
    lo = y[seg[0]]
    hi = lo
    for i in range(c):
        v = y[seg[i]]
        s += v
        s2 += v * v
        if v < lo:
            lo = v
        if v > hi:
            hi = v
    mean = s / c
    sse = 0.0
    for i in range(c):
        r = y[seg[i]] - mean
        sse += r * r
    return s, s2, sse, mean, lo == hi


@njit(cache=True, nogil=True)
def _grow(X, y, rows, n_min, mtry, unif):
    m = rows.shape[0]
    d = X.shape[1]
    cap = 2 * m - 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    parent = np.full(cap, -1, np.int64)
    count = np.zeros(cap, np.int64)
    sum_y = np.zeros(cap)
    sum_y2 = np.zeros(cap)
    sse = np.zeros(cap)
    mean = np.zeros(cap)
    split_order = np.empty(max(m - 1, 0), np.int64)

    seg_rows = rows.copy()
    buf = np.empty(m, np.int64)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    perm = np.empty(d, np.int64)

    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    sp = 1
    n_nodes = 1
    n_splits = 0
    draw = 0
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        seg = seg_rows[lo:hi]
        c = hi - lo
        s, s2, e, mu, pure = _node_stats(y, seg)
        count[node] = c
        sum_y[node] = s
        sum_y2[node] = s2
        sse[node] = e
        mean[node] = mu
        if c < n_min or pure:
            continue
        # partial Fisher-Yates for a fresh feature subset
        for j in range(d):
            perm[j] = j
        for j in range(mtry):
            k = j + int(unif[draw, j] * (d - j))
            if k >= d:
                k = d - 1
            tmp = perm[j]
            perm[j] = perm[k]
            perm[k] = tmp
        draw += 1
        feats = np.sort(perm[:mtry].copy())
        f, thr = _find_split(X, y, seg, feats, s, e)
        if f < 0:
            continue
        # stable partition keeps each child's rows in ascending index order
        nl = 0
        for i in range(c):
            r = seg[i]
            if X[r, f] < thr:
                buf[nl] = r
                nl += 1
        nr = nl
        for i in range(c):
            r = seg[i]
            if not X[r, f] < thr:
                buf[nr] = r
                nr += 1
        for i in range(c):
            seg[i] = buf[i]
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = thr
        left[node] = lc
        right[node] = rc
        parent[lc] = node
        parent[rc] = node
        split_order[n_splits] = node
        n_splits += 1
        # right pushed first so the left child is expanded next
        st_node[sp] = rc
        st_lo[sp] = lo + nl
        st_hi[sp] = hi
        sp += 1
        st_node[sp] = lc
        st_lo[sp] = lo
        st_hi[sp] = lo + nl
        sp += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            parent[:n_nodes], count[:n_nodes], sum_y[:n_nodes], sum_y2[:n_nodes],
            sse[:n_nodes], mean[:n_nodes], split_order[:n_splits])


@njit(cache=True, nogil=True)
def _route(feature, threshold, left, right, stop, X):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        v = 0
        while left[v] != -1 and not stop[v]:
            if X[i, feature[v]] < threshold[v]:
                v = left[v]
            else:
                v = right[v]
        out[i] = v
    return out


def route(tree: Tree, X: np.ndarray, stop: np.ndarray | None = None) -> np.ndarray:
    """Node id reached by each row of ``X``; descent halts at ``stop`` nodes."""
    if stop is None:
        stop = np.zeros(tree.n_nodes, dtype=np.bool_)
    return _route(tree.feature, tree.threshold, tree.left, tree.right, stop, X)


def best_split(rows, data: Dataset, candidate_features):
    """Best squared-error split of ``rows`` over ``candidate_features``.

    Returns ``(SplitPoint, left_rows, right_rows)`` or ``None`` when no
    boundary reduces the SSE (constant features or a pure node).
    """
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    if rows.shape[0] < 2:
        return None
    feats = np.unique(np.asarray(candidate_features, dtype=np.int64))
    s, _, e, _, pure = _node_stats(data.response, rows)
    if pure:
        return None
    f, thr = _find_split(data.features, data.response, rows, feats, s, e)
    if f < 0:
        return None
    go_left = data.features[rows, f] < thr
    return SplitPoint(int(f), float(thr)), rows[go_left], rows[~go_left]


def fit_tree(data: Dataset, rows, config: TreeConfig) -> Tree:
    """Grow a tree depth-first (left child first) on the row multiset ``rows``.

    Duplicated rows count with multiplicity.  The result does not depend on
    the order of ``rows``.
    """
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    if rows.shape[0] == 0:
        raise ValueError("cannot fit a tree on an empty row multiset")
    mtry = config.resolve_mtry(data.d)
    m = rows.shape[0]
    unif = np.random.default_rng(config.seed).random((2 * m - 1, mtry))
    arrays = _grow(data.features, data.response, rows, config.min_node_size, mtry, unif)
    return Tree(*arrays)


def predict_tree(tree: Tree, x) -> float | np.ndarray:
    """Leaf mean for one point (1-d ``x``) or for each row of a matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(tree.predict(x[None, :])[0])
    return tree.predict(x)
