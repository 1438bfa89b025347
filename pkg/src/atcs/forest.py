"""Random forest of CART trees with Gini splits, grown to purity.

Trees are stored as flat arrays (feature, threshold, child indices) so
batch prediction is a vectorized level walk instead of per-sample
recursion.  sqrt(d) candidate features per split, bootstrap per tree,
plurality vote with lowest-class-id ties.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .seeds import subseed

N_TREES_DEFAULT = 100
_LEAF = -1


class ForestError(Exception):
    pass


@dataclass
class Tree:
    feature: np.ndarray      # (nodes,) int; -1 marks a leaf
    threshold: np.ndarray    # (nodes,) float
    left: np.ndarray         # (nodes,) int child index
    right: np.ndarray
    leaf_class: np.ndarray   # (nodes,) int class index, -1 on internal

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class ForestModel:
    trees: list
    n_trees: int
    classes: np.ndarray      # sorted original labels
    feature_dim: int
    seed: int
    degenerate: bool = False

    def __post_init__(self):
        if self.n_trees < 1 or len(self.trees) != self.n_trees:
            raise ForestError("tree count mismatch")


@dataclass
class ConfusionMatrix:
    classes: np.ndarray
    counts: np.ndarray       # (c, c) ints, rows = true class

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        c = len(self.classes)
        if self.counts.shape != (c, c):
            raise ForestError(f"counts must be ({c}, {c})")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return 100.0 * float(np.trace(self.counts)) / self.total

    def rate(self, true_label, predicted_label) -> float:
        """Row-normalized percent of `true_label` classified as `predicted`."""
        i = int(np.searchsorted(self.classes, true_label))
        j = int(np.searchsorted(self.classes, predicted_label))
        row = self.counts[i].sum()
        return 100.0 * self.counts[i, j] / row if row else 0.0


class _Builder:
    def __init__(self, X, y, n_classes, n_candidates, rng):
        self.X, self.y = X, y
        self.n_classes = n_classes
        self.m = n_candidates
        self.rng = rng
        self.feature, self.threshold = [], []
        self.left, self.right, self.leaf = [], [], []

    def _new_node(self):
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(_LEAF)
        self.right.append(_LEAF)
        self.leaf.append(_LEAF)
        return len(self.feature) - 1

    def _best_split(self, idx):
        """(feature, threshold, weighted gini) or None if unsplittable."""
        X, y = self.X[idx], self.y[idx]
        n = len(idx)
        d = X.shape[1]
        cands = self.rng.choice(d, size=min(self.m, d), replace=False)
        cands.sort()
        best = None
        for f in cands:
            col = X[:, f]
            order = np.argsort(col, kind="stable")
            cs, ys = col[order], y[order]
            boundary = np.flatnonzero(cs[1:] > cs[:-1]) + 1  # split positions
            if len(boundary) == 0:
                continue
            onehot = np.zeros((n, self.n_classes))
            onehot[np.arange(n), ys] = 1.0
            pref = np.cumsum(onehot, axis=0)
            nl = boundary.astype(float)
            cl = pref[boundary - 1]
            cr = pref[-1] - cl
            nr = n - nl
            gl = 1.0 - np.sum(cl * cl, axis=1) / (nl * nl)
            gr = 1.0 - np.sum(cr * cr, axis=1) / (nr * nr)
            score = (nl * gl + nr * gr) / n
            j = int(np.argmin(score))
            if best is None or score[j] < best[2] - 1e-15:
                thr = 0.5 * (cs[boundary[j] - 1] + cs[boundary[j]])
                best = (int(f), float(thr), float(score[j]))
        return best

    def build(self, idx):
        node = self._new_node()
        y = self.y[idx]
        counts = np.bincount(y, minlength=self.n_classes)
        if counts.max() == len(idx):
            self.leaf[node] = int(np.argmax(counts))
            return node
        split = self._best_split(idx)
        if split is None:
            self.leaf[node] = int(np.argmax(counts))
            return node
        f, thr, _ = split
        go_left = self.X[idx, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(idx[go_left])
        self.right[node] = self.build(idx[~go_left])
        return node

    def tree(self) -> Tree:
        return Tree(feature=np.array(self.feature, dtype=int),
                    threshold=np.array(self.threshold),
                    left=np.array(self.left, dtype=int),
                    right=np.array(self.right, dtype=int),
                    leaf_class=np.array(self.leaf, dtype=int))


def train_forest(X, y, n_trees: int = N_TREES_DEFAULT, seed: int = 0) -> ForestModel:
    """Bootstrap-aggregated CART trees; deterministic per seed."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or len(X) != len(y) or len(X) == 0:
        raise ForestError(f"bad training shapes {X.shape}, {y.shape}")
    classes = np.unique(y)
    yi = np.searchsorted(classes, y)
    d = X.shape[1]
    m = max(1, round(np.sqrt(d)))
    n = len(X)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(subseed(seed, "tree", t))
        boot = rng.integers(0, n, size=n)
        b = _Builder(X[boot], yi[boot], len(classes), m, rng)
        b.build(np.arange(n))
        trees.append(b.tree())
    return ForestModel(trees=trees, n_trees=n_trees, classes=classes,
                       feature_dim=d, seed=int(seed),
                       degenerate=len(classes) < 2)


def _tree_apply(tree: Tree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=int)
    while True:
        f = tree.feature[node]
        live = f != _LEAF
        if not live.any():
            return tree.leaf_class[node]
        rows = np.flatnonzero(live)
        go_left = X[rows, f[rows]] <= tree.threshold[node[rows]]
        node[rows] = np.where(go_left, tree.left[node[rows]],
                              tree.right[node[rows]])


def vote_counts(model: ForestModel, X) -> np.ndarray:
    """(n, classes) histogram of tree votes."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.feature_dim:
        raise ForestError(
            f"feature dim {X.shape[1]} != model {model.feature_dim}")
    votes = np.zeros((len(X), len(model.classes)), dtype=int)
    rows = np.arange(len(X))
    for tree in model.trees:
        votes[rows, _tree_apply(tree, X)] += 1
    return votes


def predict_many(model: ForestModel, X) -> np.ndarray:
    votes = vote_counts(model, X)
    return model.classes[np.argmax(votes, axis=1)]   # argmax: lowest id ties


def predict(model: ForestModel, fv):
    """(label, per-class vote histogram) for one feature vector."""
    votes = vote_counts(model, np.asarray(fv, dtype=float))[0]
    return model.classes[int(np.argmax(votes))], votes


def evaluate(model: ForestModel, X, y) -> ConfusionMatrix:
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise ForestError("empty test set")
    pred = predict_many(model, X)
    classes = np.union1d(model.classes, y)
    c = len(classes)
    counts = np.zeros((c, c), dtype=int)
    np.add.at(counts, (np.searchsorted(classes, y),
                       np.searchsorted(classes, pred)), 1)
    return ConfusionMatrix(classes=classes, counts=counts)


def node_count(model: ForestModel) -> int:
    return sum(t.n_nodes for t in model.trees)


def cross_validate(X, y, folds: int, n_trees: int, seed: int) -> float:
    """Stratified k-fold accuracy (percent), for reporting."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(subseed(seed, "cv"))
    fold_of = np.empty(len(y), dtype=int)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = np.arange(len(idx)) % folds
    hits = 0
    for f in range(folds):
        test = fold_of == f
        model = train_forest(X[~test], y[~test], n_trees,
                             subseed(seed, "fold", f))
        hits += int(np.sum(predict_many(model, X[test]) == y[test]))
    return 100.0 * hits / len(y)


def _node_to_json(tree: Tree, i: int):
    if tree.feature[i] == _LEAF:
        return {"leaf": int(tree.leaf_class[i])}
    return {"feature": int(tree.feature[i]),
            "threshold": float(tree.threshold[i]),
            "left": _node_to_json(tree, tree.left[i]),
            "right": _node_to_json(tree, tree.right[i])}


def _node_from_json(obj, b: "_JsonBuilder"):
    i = b.new()
    if "leaf" in obj:
        b.leaf[i] = int(obj["leaf"])
    else:
        b.feature[i] = int(obj["feature"])
        b.threshold[i] = float(obj["threshold"])
        b.left[i] = _node_from_json(obj["left"], b)
        b.right[i] = _node_from_json(obj["right"], b)
    return i


class _JsonBuilder:
    def __init__(self):
        self.feature, self.threshold = [], []
        self.left, self.right, self.leaf = [], [], []

    def new(self):
        for a in (self.feature, self.left, self.right, self.leaf):
            a.append(_LEAF)
        self.threshold.append(0.0)
        return len(self.feature) - 1

    def tree(self):
        return Tree(feature=np.array(self.feature, dtype=int),
                    threshold=np.array(self.threshold),
                    left=np.array(self.left, dtype=int),
                    right=np.array(self.right, dtype=int),
                    leaf_class=np.array(self.leaf, dtype=int))


def forest_to_json(model: ForestModel) -> dict:
    return {"format": "atcs-forest", "version": 1,
            "n_trees": model.n_trees,
            "classes": [int(c) for c in model.classes],
            "feature_dim": model.feature_dim, "seed": model.seed,
            "degenerate": model.degenerate,
            "node_count": node_count(model),
            "trees": [_node_to_json(t, 0) for t in model.trees]}


def forest_from_json(payload: dict) -> ForestModel:
    if payload.get("format") != "atcs-forest":
        raise ForestError("not a forest payload")
    trees = []
    for obj in payload["trees"]:
        b = _JsonBuilder()
        _node_from_json(obj, b)
        trees.append(b.tree())
    return ForestModel(trees=trees, n_trees=payload["n_trees"],
                       classes=np.array(payload["classes"], dtype=int),
                       feature_dim=payload["feature_dim"],
                       seed=payload["seed"],
                       degenerate=payload.get("degenerate", False))


def save_forest(model: ForestModel, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(forest_to_json(model), fh)


def load_forest(path: str) -> ForestModel:
    with open(path) as fh:
        return forest_from_json(json.load(fh))
