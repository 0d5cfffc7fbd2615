"""Accumulated-information pruning and its alpha-scaled form.

Information values follow the Gaussian root/stump likelihoods: a node
``N`` treated as a single leaf carries ``|N| log(2 pi s0^2) + |N|``; a child
evaluated under a pooled variance ``s^2`` carries
``|C| log(2 pi s^2) + SSE_C / s^2``.  Penalties are added only when two
configurations are compared, scaled by ``alpha``.

All routines work from the per-node statistics stored in a
:class:`~trimforest.tree.Tree`, so a single pass costs O(K) regardless of
the training sample size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .tree import LEAF, Node, Tree, route

VARIANCE_FLOOR = 1e-15
LOG_2PI = math.log(2.0 * math.pi)


class VarianceFloorError(ArithmeticError):
    """A variance estimate stayed below the floor after substitution."""


@dataclass(frozen=True)
class Penalty:
    """Root and stump penalties as multiples of ``log(n)``."""

    root_coef: float = 2.0
    stump_coef: float = 5.0

    def p0(self, n) -> float:
        return self.root_coef * math.log(n)

    def p1(self, n) -> float:
        return self.stump_coef * math.log(n)


DEFAULT_PENALTY = Penalty()


@njit(cache=True, nogil=True)
def _floored(var, terminal_var):
    # nan signals that the fallback was also below the floor
    if var < VARIANCE_FLOOR:
        var = 0.5 * terminal_var
        if var < VARIANCE_FLOOR:
            return np.nan
    return var


@njit(cache=True, nogil=True)
def _parent_info(count, sse):
    s0 = _floored(sse / count, sse / count)
    return count * (LOG_2PI + math.log(s0)) + count


@njit(cache=True, nogil=True)
def _child_info(count, sse, pooled_var):
    return count * (LOG_2PI + math.log(pooled_var)) + sse / pooled_var


@njit(cache=True, nogil=True)
def _prune_pass(left, right, count, sse, split_order, alpha, c0, c1,
                collapsed, info, term_sse, term_count):
    """Backward pass.

    Returns ``(bad, decisions)``: the id of a node that hit the floor (or -1)
    and the number of merge decisions taken.
    """
    decisions = 0
    for k in range(split_order.shape[0] - 1, -1, -1):
        v = split_order[k]
        lc = left[v]
        rc = right[v]
        n = count[v]
        terminal_var = sse[v] / n
        i_n = _parent_info(n, sse[v])
        if np.isnan(i_n):
            return v, decisions
        l_def = not np.isnan(info[lc])
        r_def = not np.isnan(info[rc])
        if l_def and r_def:
            i_l = info[lc]
            i_r = info[rc]
        elif r_def:
            var = _floored((sse[lc] + term_sse[rc]) / n, terminal_var)
            if np.isnan(var):
                return v, decisions
            i_l = _child_info(count[lc], sse[lc], var)
            i_r = info[rc]
        elif l_def:
            var = _floored((sse[rc] + term_sse[lc]) / n, terminal_var)
            if np.isnan(var):
                return v, decisions
            i_l = info[lc]
            i_r = _child_info(count[rc], sse[rc], var)
        else:
            var = _floored((sse[lc] + sse[rc]) / n, terminal_var)
            if np.isnan(var):
                return v, decisions
            i_l = _child_info(count[lc], sse[lc], var)
            i_r = _child_info(count[rc], sse[rc], var)
        decisions += 1
        log_n = math.log(n)
        p0 = c0 * log_n
        p1 = c1 * log_n
        if i_n + alpha * p0 <= i_l + i_r + alpha * p1:
            collapsed[v] = True
            info[v] = np.nan
            term_sse[v] = sse[v]
            term_count[v] = 1
        else:
            info[v] = i_l + i_r + alpha * (p1 - p0)
            term_sse[v] = term_sse[lc] + term_sse[rc]
            term_count[v] = term_count[lc] + term_count[rc]
    return -1, decisions


@njit(cache=True, nogil=True)
def _close_merged(split_order, parent, collapsed):
    # split_order lists ancestors before descendants
    merged = collapsed.copy()
    for k in range(split_order.shape[0]):
        v = split_order[k]
        p = parent[v]
        if p != -1 and merged[p]:
            merged[v] = True
    return merged


@dataclass(eq=False)
class TrimState:
    """Per-node bookkeeping left behind by a pruning pass.

    ``info`` is NaN where the information value is undefined (current leaves).
    """

    info: np.ndarray
    terminal_sse: np.ndarray
    terminal_count: np.ndarray


@dataclass(eq=False)
class TrimmedTree:
    base: Tree
    merged: np.ndarray
    alpha: float
    n_decisions: int = 0
    state: TrimState | None = None

    @property
    def n_leaves(self) -> int:
        """Leaves of the pruned tree."""
        stop = self.merged
        parent = self.base.parent
        kept = 0
        for v in range(self.base.n_nodes):
            p = parent[v]
            if p != LEAF and (stop[p]):
                continue
            if self.base.left[v] == LEAF or stop[v]:
                kept += 1
        return kept

    def leaf_values(self) -> np.ndarray:
        """Per-node prediction: the mean of the collapse root above it, if any."""
        return _effective_means(self.base.parent, self.base.mean, self.merged)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return self.base.mean[route(self.base, X, self.merged)]

    def merged_ids(self) -> list[int]:
        return np.flatnonzero(self.merged).tolist()


@njit(cache=True, nogil=True)
def _effective_means(parent, mean, merged):
    # children always have larger ids than their parent
    out = mean.copy()
    for v in range(1, mean.shape[0]):
        p = parent[v]
        if merged[p]:
            out[v] = out[p]
    return out


def _check(value, what):
    if math.isnan(value):
        raise VarianceFloorError(
            f"{what}: variance estimate below {VARIANCE_FLOOR:g} even after "
            "substituting half the terminal-node variance; increase min_node_size"
        )
    return value


def parent_information(node: Node) -> float:
    """Information value of ``node`` as a single Gaussian leaf (no penalty)."""
    st = node.stats
    return _check(_parent_info(st.count, st.sse), f"node {node.id}")


def child_information_case1(parent: Node, left: Node, right: Node) -> tuple[float, float]:
    """Information values of two leaf children under their pooled variance."""
    n = parent.stats.count
    var = _check(_floored((left.stats.sse + right.stats.sse) / n, parent.stats.sse / n),
                 f"children of node {parent.id}")
    return (_child_info(left.stats.count, left.stats.sse, var),
            _child_info(right.stats.count, right.stats.sse, var))


def child_information_case2(parent: Node, undefined_child: Node,
                            defined_child_terminal_sse: float) -> float:
    """Information value of a leaf child whose sibling already has a subtree.

    The variance pools the leaf's SSE with the SSE of every current terminal
    node below the sibling.
    """
    n = parent.stats.count
    var = _check(_floored((undefined_child.stats.sse + defined_child_terminal_sse) / n,
                          parent.stats.sse / n),
                 f"children of node {parent.id}")
    return _child_info(undefined_child.stats.count, undefined_child.stats.sse, var)


def prune(tree: Tree, alpha: float, penalty: Penalty = DEFAULT_PENALTY,
          keep_state: bool = False) -> TrimmedTree:
    """Prune ``tree`` in one reverse pass over its split history.

    The base tree is left untouched; the result marks every internal node
    that has been collapsed into a leaf.

    Raises
    ------
    VarianceFloorError
        If an information value cannot be formed because a node's variance
        estimate is degenerate.
    """
    alpha = float(alpha)
    if not alpha >= 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    n_nodes = tree.n_nodes
    collapsed = np.zeros(n_nodes, dtype=np.bool_)
    info = np.full(n_nodes, np.nan)
    term_sse = tree.sse.copy()
    term_count = np.ones(n_nodes, dtype=np.int64)
    bad, decisions = _prune_pass(tree.left, tree.right, tree.count, tree.sse, tree.split_order,
                      alpha, penalty.root_coef, penalty.stump_coef,
                      collapsed, info, term_sse, term_count)
    if bad >= 0:
        raise VarianceFloorError(
            f"node {bad} (count {tree.count[bad]}): variance estimate below "
            f"{VARIANCE_FLOOR:g} even after substituting half the terminal-node "
            "variance; increase min_node_size"
        )
    merged = _close_merged(tree.split_order, tree.parent, collapsed)
    state = TrimState(info, term_sse, term_count) if keep_state else None
    return TrimmedTree(tree, merged, alpha, decisions, state)


def predict_trimmed(tt: TrimmedTree, x) -> float | np.ndarray:
    """Prediction of a pruned tree for one point or each row of a matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return float(tt.predict(x[None, :])[0])
    return tt.predict(x)
