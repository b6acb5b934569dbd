"""Random forest of Gini-split CART trees.

Pinned behavior (there is no hidden library default):

* bootstrap sample of n rows per tree, drawn with the tree's own generator
* sqrt(D) candidate features per node, drawn without replacement
* exact best split: candidate thresholds are midpoints between consecutive
  distinct sorted values; the split minimizing the size-weighted child Gini
  impurity wins, first minimum on ties
* rows with feature value <= threshold go left
* nodes grow until pure, fewer than 2 rows, or no candidate feature splits
* leaf predicts its majority class (lowest class index on ties)
* the forest's class score is the fraction of tree votes

Per-tree generators are spawned deterministically from the master seed, so
results do not depend on evaluation order or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_LEAF = -1


@dataclass
class TreeArrays:
    """One decision tree as flat arrays indexed by node id."""

    feature: np.ndarray  # int32, _LEAF for leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    leaf_class: np.ndarray  # int32, valid at leaves


@dataclass
class ForestModel:
    """Trained forest: trees plus the training shape."""

    trees: list[TreeArrays]
    n_classes: int
    n_features: int


def _best_split(
    x: np.ndarray, y_onehot: np.ndarray, feats: np.ndarray
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, weighted_gini) among candidate features.

    Returns None when every candidate feature is constant on this node.
    """
    n = x.shape[0]
    xf = x[:, feats]
    order = np.argsort(xf, axis=0, kind="stable")
    xs = np.take_along_axis(xf, order, axis=0)
    ys = y_onehot[order]  # (n, F, C)
    left_counts = np.cumsum(ys, axis=0)[:-1]  # cut after row i -> left size i+1
    total = left_counts[-1] + ys[-1]
    right_counts = total[None, :, :] - left_counts
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    # Size-weighted Gini impurity, scaled by n (constant factor).
    score = (nl - (left_counts**2).sum(axis=2) / nl) + (
        nr - (right_counts**2).sum(axis=2) / nr
    )
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf)
    flat = int(np.argmin(score))
    cut, fcol = divmod(flat, feats.shape[0])
    thr = 0.5 * (xs[cut, fcol] + xs[cut + 1, fcol])
    return int(feats[fcol]), float(thr), float(score[cut, fcol])


def _grow_tree(
    x: np.ndarray, y: np.ndarray, n_classes: int, mtry: int, rng: np.random.Generator
) -> TreeArrays:
    n, d = x.shape
    y_onehot = np.zeros((n, n_classes), dtype=np.float64)
    y_onehot[np.arange(n), y] = 1.0

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    leaf_class: list[int] = []

    def new_node() -> int:
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        leaf_class.append(0)
        return len(feature) - 1

    root = new_node()
    stack: list[tuple[int, np.ndarray]] = [(root, np.arange(n))]
    while stack:
        node, idx = stack.pop()
        counts = y_onehot[idx].sum(axis=0)
        majority = int(np.argmax(counts))
        if idx.shape[0] < 2 or counts.max() == idx.shape[0]:
            leaf_class[node] = majority
            continue
        feats = rng.choice(d, size=min(mtry, d), replace=False)
        split = _best_split(x[idx], y_onehot[idx], feats)
        if split is None:
            leaf_class[node] = majority
            continue
        f, thr, _ = split
        go_left = x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        l_child, r_child = new_node(), new_node()
        left[node] = l_child
        right[node] = r_child
        # Right pushed first so the left branch is expanded (and numbered)
        # next: node ids depend only on data and seed.
        stack.append((r_child, idx[~go_left]))
        stack.append((l_child, idx[go_left]))
    return TreeArrays(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        leaf_class=np.array(leaf_class, dtype=np.int32),
    )


def fit_forest(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    n_trees: int = 100,
    seed: int = 0,
) -> ForestModel:
    """Fit a bootstrap forest; deterministic for a given seed."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = x.shape
    mtry = max(1, int(np.sqrt(d)))
    children = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for ss in children:
        rng = np.random.default_rng(ss)
        sample = rng.integers(0, n, size=n)
        trees.append(_grow_tree(x[sample], y[sample], n_classes, mtry, rng))
    return ForestModel(trees=trees, n_classes=n_classes, n_features=d)


def _tree_predict(tree: TreeArrays, x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    node = np.zeros(n, dtype=np.int64)
    while True:
        f = tree.feature[node]
        active = f != _LEAF
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        fa = f[active]
        go_left = x[rows, fa] <= tree.threshold[node[rows]]
        node[rows] = np.where(
            go_left, tree.left[node[rows]], tree.right[node[rows]]
        )
    return tree.leaf_class[node]


def predict_votes(model: ForestModel, x: np.ndarray) -> np.ndarray:
    """Fraction of tree votes per class, (n, C); rows sum to 1 exactly."""
    x = np.asarray(x, dtype=np.float64)
    counts = np.zeros((x.shape[0], model.n_classes), dtype=np.float64)
    for tree in model.trees:
        pred = _tree_predict(tree, x)
        counts[np.arange(x.shape[0]), pred] += 1.0
    return counts / len(model.trees)
