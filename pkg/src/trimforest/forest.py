"""Random forests with alpha-trimming selected by out-of-bag error."""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import Dataset, bootstrap_sample
from .tree import Tree, TreeConfig, fit_tree, route
from .trim import DEFAULT_PENALTY, Penalty, TrimmedTree, VarianceFloorError, _effective_means, prune

MODEL_FORMAT = "trimforest-model"
MODEL_VERSION = 1


def alpha_grid(start: float = 0.0, stop: float = 3.0, step: float = 0.1) -> tuple:
    """Inclusive arithmetic grid, rounded so that e.g. 0.3 is exactly 0.3."""
    if step <= 0 or stop < start:
        raise ValueError("alpha grid needs step > 0 and stop >= start")
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(n))


DEFAULT_ALPHA_GRID = alpha_grid(0.0, 3.0, 0.1)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 750
    tree_config: TreeConfig = field(default_factory=lambda: TreeConfig(min_node_size=3))
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    master_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        grid = tuple(float(a) for a in self.alpha_grid)
        if not grid:
            raise ValueError("alpha_grid must be nonempty")
        if any(a < 0 for a in grid) or list(grid) != sorted(grid):
            raise ValueError("alpha_grid must be sorted and nonnegative")
        object.__setattr__(self, "alpha_grid", grid)


class UnknownAlphaError(KeyError):
    pass


@dataclass(eq=False)
class Forest:
    trees: list
    oob_masks: np.ndarray
    config: ForestConfig
    trims: dict | None = None
    selected_alpha: float | None = None
    feature_names: list = field(default_factory=list)
    target: str = "y"
    oob_by_alpha: dict | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def trim_key(self, alpha: float) -> float:
        """Grid value matching ``alpha``."""
        if self.trims:
            for a in self.trims:
                if abs(a - alpha) <= 1e-12:
                    return a
        raise UnknownAlphaError(f"no trims stored for alpha={alpha}")

    def trimmed(self, alpha: float) -> list[TrimmedTree]:
        key = self.trim_key(alpha)
        return [TrimmedTree(t, m, key) for t, m in zip(self.trees, self.trims[key])]


def _n_threads() -> int:
    env = os.environ.get("TRIMFOREST_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map(fn, items):
    items = list(items)
    threads = min(_n_threads(), len(items))
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def tree_seeds(master_seed: int, b: int) -> tuple[int, int]:
    """Bootstrap and growth seeds of tree ``b``, independent of fit order."""
    s = np.random.SeedSequence([int(master_seed), int(b)]).generate_state(2, dtype=np.uint64)
    return int(s[0]), int(s[1])


def fit_forest(data: Dataset, config: ForestConfig, target: str = "y") -> Forest:
    """Fit ``config.n_trees`` trees on independent bootstrap samples."""
    if data.n < 2:
        raise ValueError("need at least 2 observations")
    tc = config.tree_config
    tc.resolve_mtry(data.d)

    def one(b):
        boot_seed, grow_seed = tree_seeds(config.master_seed, b)
        idx, oob = bootstrap_sample(data.n, boot_seed)
        tree = fit_tree(data, idx, TreeConfig(tc.min_node_size, tc.mtry, grow_seed))
        return tree, oob

    fitted = _map(one, range(config.n_trees))
    trees = [t for t, _ in fitted]
    masks = np.array([m for _, m in fitted], dtype=np.bool_)
    return Forest(trees, masks, config, feature_names=list(data.feature_names), target=target)


def _as_matrix(X) -> np.ndarray:
    return np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))


def predict_forest(forest: Forest, X, alpha: float | None = None) -> np.ndarray:
    """Average tree prediction for each row of ``X``.

    With ``alpha`` the trimmed trees at that grid value are used; without it
    the selected alpha is used when one exists, else the raw trees.
    Trees are summed in index order so results do not depend on threading.
    """
    X = _as_matrix(X)
    if alpha is None:
        alpha = forest.selected_alpha
    if alpha is None:
        stops = [None] * forest.n_trees
    else:
        key = forest.trim_key(alpha)
        stops = forest.trims[key]
    parts = _map(lambda b: forest.trees[b].mean[route(forest.trees[b], X, stops[b])],
                 range(forest.n_trees))
    total = np.zeros(X.shape[0])
    for p in parts:
        total += p
    return total / forest.n_trees


def _oob_errors(forest: Forest, data: Dataset, merged_sets: list) -> np.ndarray:
    """OOB MSE for each entry of ``merged_sets`` (None means untrimmed)."""
    n = data.n
    n_sets = len(merged_sets)
    sums = np.zeros((n_sets, n))
    cnt = np.zeros(n, dtype=np.int64)
    for b, tree in enumerate(forest.trees):
        oob = np.flatnonzero(forest.oob_masks[b])
        if oob.size == 0:
            continue
        leaves = route(tree, data.features[oob])
        cnt[oob] += 1
        for a, merged in enumerate(merged_sets):
            vals = tree.mean if merged is None else _effective_means(tree.parent, tree.mean, merged[b])
            sums[a, oob] += vals[leaves]
    covered = cnt > 0
    if not covered.any():
        raise ValueError("no observation is out-of-bag for any tree; use more trees")
    y = data.response[covered]
    # one 1-d reduction per row keeps each value independent of the batch
    out = np.empty(n_sets)
    for a in range(n_sets):
        resid = sums[a, covered] / cnt[covered] - y
        out[a] = np.mean(resid * resid)
    return out


def oob_error(forest: Forest, data: Dataset, alpha: float | None = None) -> float:
    """Out-of-bag MSE, over points left out by at least one tree."""
    merged = None if alpha is None else forest.trims[forest.trim_key(alpha)]
    return float(_oob_errors(forest, data, [merged])[0])


def alpha_trim(forest: Forest, data: Dataset, penalty: Penalty = DEFAULT_PENALTY) -> Forest:
    """Prune every tree at every grid alpha and select alpha by OOB error.

    The base trees are shared, never refit.  Ties in OOB error go to the
    smallest alpha.
    """
    grid = forest.config.alpha_grid

    def one(b):
        out = []
        for a in grid:
            try:
                out.append(prune(forest.trees[b], a, penalty).merged)
            except VarianceFloorError as exc:
                raise VarianceFloorError(f"tree {b}: {exc}") from None
        return out

    per_tree = _map(one, range(forest.n_trees))
    trims = {a: [per_tree[b][i] for b in range(forest.n_trees)] for i, a in enumerate(grid)}
    errors = _oob_errors(forest, data, [trims[a] for a in grid])
    best = 0
    for i in range(1, len(grid)):
        if errors[i] < errors[best]:
            best = i
    return replace(forest, trims=trims, selected_alpha=grid[best],
                   oob_by_alpha=dict(zip(grid, errors.tolist())))


# -- model files ------------------------------------------------------------

class ModelFormatError(ValueError):
    pass


def _tree_to_dict(tree: Tree, oob: np.ndarray) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "count": tree.count.tolist(),
        "sum_y": tree.sum_y.tolist(),
        "sum_y2": tree.sum_y2.tolist(),
        "sse": tree.sse.tolist(),
        "mean": tree.mean.tolist(),
        "split_order": tree.split_order.tolist(),
        "oob": "".join("1" if v else "0" for v in oob),
    }


def _tree_from_dict(d: dict) -> tuple[Tree, np.ndarray]:
    left = np.array(d["left"], dtype=np.int64)
    right = np.array(d["right"], dtype=np.int64)
    parent = np.full(left.shape[0], -1, dtype=np.int64)
    internal = left >= 0
    parent[left[internal]] = np.flatnonzero(internal)
    parent[right[internal]] = np.flatnonzero(internal)
    tree = Tree(
        feature=np.array(d["feature"], dtype=np.int64),
        threshold=np.array(d["threshold"], dtype=np.float64),
        left=left,
        right=right,
        parent=parent,
        count=np.array(d["count"], dtype=np.int64),
        sum_y=np.array(d["sum_y"], dtype=np.float64),
        sum_y2=np.array(d["sum_y2"], dtype=np.float64),
        sse=np.array(d["sse"], dtype=np.float64),
        mean=np.array(d["mean"], dtype=np.float64),
        split_order=np.array(d["split_order"], dtype=np.int64),
    )
    oob = np.array([c == "1" for c in d["oob"]], dtype=np.bool_)
    return tree, oob


def model_to_dict(forest: Forest) -> dict:
    cfg = forest.config
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "target": forest.target,
        "feature_names": list(forest.feature_names),
        "config": {
            "n_trees": cfg.n_trees,
            "min_node_size": cfg.tree_config.min_node_size,
            "mtry": cfg.tree_config.mtry,
            "alpha_grid": list(cfg.alpha_grid),
            "master_seed": cfg.master_seed,
        },
        "trees": [_tree_to_dict(t, m) for t, m in zip(forest.trees, forest.oob_masks)],
        "trims": None,
        "selected_alpha": forest.selected_alpha,
        "oob_by_alpha": None,
    }
    if forest.oob_by_alpha is not None:
        doc["oob_by_alpha"] = [[a, e] for a, e in forest.oob_by_alpha.items()]
    if forest.trims is not None:
        doc["trims"] = [
            {"alpha": a, "merged": [np.flatnonzero(m).tolist() for m in merged]}
            for a, merged in forest.trims.items()
        ]
    return doc


def model_from_dict(doc: dict) -> Forest:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a trimforest model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"model version {doc.get('version')} unsupported (expected {MODEL_VERSION})"
        )
    try:
        c = doc["config"]
        config = ForestConfig(
            n_trees=c["n_trees"],
            tree_config=TreeConfig(c["min_node_size"], c["mtry"]),
            alpha_grid=tuple(c["alpha_grid"]),
            master_seed=c["master_seed"],
        )
        pairs = [_tree_from_dict(t) for t in doc["trees"]]
        trees = [t for t, _ in pairs]
        masks = np.array([m for _, m in pairs], dtype=np.bool_)
        trims = None
        if doc["trims"] is not None:
            trims = {}
            for entry in doc["trims"]:
                merged = []
                for t, ids in zip(trees, entry["merged"]):
                    m = np.zeros(t.n_nodes, dtype=np.bool_)
                    m[np.asarray(ids, dtype=np.int64)] = True
                    merged.append(m)
                trims[float(entry["alpha"])] = merged
        sel = doc["selected_alpha"]
        oob_by_alpha = doc.get("oob_by_alpha")
        if oob_by_alpha is not None:
            oob_by_alpha = {float(a): float(e) for a, e in oob_by_alpha}
        return Forest(trees, masks, config, trims, None if sel is None else float(sel),
                      list(doc["feature_names"]), doc["target"], oob_by_alpha)
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None


def save_model(forest: Forest, path) -> None:
    """Write ``forest`` as a versioned JSON document.

    JSON numbers are written with Python's shortest round-trip repr, so every
    float reloads bit-exactly.
    """
    text = json.dumps(model_to_dict(forest), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n")


def load_model(path) -> Forest:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model file {path}: {exc}") from None
    return model_from_dict(doc)
