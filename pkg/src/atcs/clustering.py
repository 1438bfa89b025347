"""Signal-type clustering: k-means++, Davies-Bouldin score, ratio merging.

Cluster ids are canonical: after fitting, clusters are relabeled in
lexicographic centroid order, so a 1-D model reads as sorted intervals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSelection, N_FEATURES

CS_GRID = tuple(range(0, 100, 4))      # admissible cr percentages, 25 levels
K_MIN = 2
K_MAX = 25


class ClusteringError(Exception):
    pass


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray              # (k, d)
    counts: tuple                      # training members per cluster
    seed: int
    feature_selection: FeatureSelection | None = None
    location: int | None = None
    inertia_history: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != self.k or self.k < K_MIN:
            raise ClusteringError(f"need >= {K_MIN} centroids, got {c.shape}")
        if not np.isfinite(c).all():
            raise ClusteringError("non-finite centroids")
        if len(self.counts) != self.k:
            raise ClusteringError("counts length != k")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class RatioAssignment:
    """Per-cluster compression ratio, restricted to the 4-percent grid."""

    crs: tuple

    def __post_init__(self):
        crs = tuple(int(v) for v in self.crs)
        bad = [v for v in crs if v not in CS_GRID]
        if bad:
            raise ClusteringError(f"ratios {bad} not on the grid {CS_GRID}")
        object.__setattr__(self, "crs", crs)

    def __len__(self):
        return len(self.crs)


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or len(X) == 0:
        raise ClusteringError(f"expected (n, d) points, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ClusteringError("non-finite points")
    return X


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=2)


def _labels(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.argmin(_sq_dists(X, C), axis=1)    # argmin takes lowest id ties


def _plus_plus_seed(X: np.ndarray, k: int, rng) -> np.ndarray:
    n = len(X)
    C = np.empty((k, X.shape[1]))
    C[0] = X[rng.integers(n)]
    d2 = np.sum((X - C[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            C[i] = X[rng.integers(n)]
        else:
            C[i] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - C[i]) ** 2, axis=1))
    return C


def kmeans_fit(points, k: int, seed: int, max_iter: int = 100,
               feature_selection: FeatureSelection | None = None,
               location: int | None = None) -> ClusterModel:
    """k-means++ seeding then Lloyd iterations to an assignment fixpoint."""
    X = _as_points(points)
    if k < K_MIN:
        raise ClusteringError(f"k must be >= {K_MIN}, got {k}")
    n_distinct = len(np.unique(X, axis=0))
    if k > n_distinct:
        raise ClusteringError(f"k={k} exceeds {n_distinct} distinct points")

    rng = np.random.default_rng(int(seed))
    C = _plus_plus_seed(X, k, rng)
    labels = _labels(X, C)
    history = []
    for _ in range(max_iter):
        for i in range(k):
            members = X[labels == i]
            if len(members):
                C[i] = members.mean(axis=0)
            else:
                # reseed an emptied cluster to the point farthest from its
                # current centroid
                far = np.argmax(np.min(_sq_dists(X, C), axis=1))
                C[i] = X[far]
        labels_new = _labels(X, C)
        history.append(float(np.sum((X - C[labels_new]) ** 2)))
        if np.array_equal(labels_new, labels):
            labels = labels_new
            break
        labels = labels_new

    order = np.lexsort(C.T[::-1])      # canonical: sort by centroid
    C = C[order]
    remap = np.empty(k, dtype=int)
    remap[order] = np.arange(k)
    labels = remap[labels]
    counts = np.bincount(labels, minlength=k)
    return ClusterModel(k=k, centroids=C, counts=tuple(counts), seed=int(seed),
                        feature_selection=feature_selection, location=location,
                        inertia_history=tuple(history))


def _model_space(model: ClusterModel, fv: np.ndarray) -> np.ndarray:
    fv = np.asarray(fv, dtype=float)
    if (model.feature_selection is not None and fv.ndim >= 1
            and fv.shape[-1] == N_FEATURES
            and model.dim != N_FEATURES):
        fv = model.feature_selection.apply(fv)
    if fv.shape[-1] != model.dim:
        raise ClusteringError(
            f"feature vector has {fv.shape[-1]} entries, model wants "
            f"{model.dim}")
    if not np.isfinite(fv).all():
        raise ClusteringError("missing or non-finite feature values")
    return fv


def assign(model: ClusterModel, fv) -> int:
    """Nearest centroid; equidistant cases take the lowest cluster id."""
    v = _model_space(model, np.asarray(fv, dtype=float).ravel())
    return int(np.argmin(np.sum((model.centroids - v) ** 2, axis=1)))


def assign_many(model: ClusterModel, X) -> np.ndarray:
    V = _model_space(model, _as_points(X))
    return _labels(V, model.centroids)


def davies_bouldin(model: ClusterModel, points) -> float:
    """Mean over clusters of the worst pairwise (sigma_i+sigma_j)/d_ij."""
    X = _model_space(model, _as_points(points))
    labels = _labels(X, model.centroids)
    k = model.k
    sig = np.empty(k)
    for i in range(k):
        members = X[labels == i]
        if len(members) == 0:
            raise ClusteringError(f"cluster {i} has no members")
        sig[i] = np.mean(np.linalg.norm(members - model.centroids[i], axis=1))
    ratios = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            d = np.linalg.norm(model.centroids[i] - model.centroids[j])
            if d == 0.0:
                raise ClusteringError(
                    f"coincident centroids {i} and {j}; index undefined")
            ratios[i, j] = (sig[i] + sig[j]) / d
    return float(np.mean(ratios.max(axis=1)))


def _merged_model(model: ClusterModel, groups, crs) -> tuple:
    cents, counts, out_crs = [], [], []
    for grp in groups:
        w = np.array([model.counts[i] for i in grp], dtype=float)
        block = model.centroids[list(grp)]
        if w.sum() > 0:
            cents.append(np.average(block, axis=0, weights=w))
        else:
            cents.append(block.mean(axis=0))
        counts.append(int(w.sum()))
        out_crs.append(crs[grp[0]])
    merged = ClusterModel(k=len(groups), centroids=np.array(cents),
                          counts=tuple(counts), seed=model.seed,
                          feature_selection=model.feature_selection,
                          location=model.location)
    return merged, RatioAssignment(tuple(out_crs))


def merge_equal_adjacent(model: ClusterModel, assignment: RatioAssignment):
    """Collapse equal-ratio clusters.

    In one dimension, clusters are ordered by centroid and only adjacent
    runs of equal cr merge.  In higher dimensions adjacency is undefined,
    so exact-duplicate crs merge regardless of position.
    """
    crs = assignment.crs
    if len(crs) != model.k:
        raise ClusteringError(f"{len(crs)} ratios for k={model.k}")
    if model.k < 2:
        return model, assignment
    if model.dim == 1:
        order = np.argsort(model.centroids[:, 0], kind="stable")
        groups = []
        for i in order:
            if groups and crs[groups[-1][-1]] == crs[i]:
                groups[-1].append(int(i))
            else:
                groups.append([int(i)])
    else:
        groups, seen = [], {}
        for i in range(model.k):
            if crs[i] in seen:
                groups[seen[crs[i]]].append(i)
            else:
                seen[crs[i]] = len(groups)
                groups.append([i])
    if len(groups) < 2:
        # a single surviving cluster is not a valid model; keep the input
        return model, assignment
    return _merged_model(model, groups, crs)


def cluster_efficiency(assignment: RatioAssignment) -> float:
    """Percent of merged clusters carrying a distinct ratio."""
    if len(assignment) == 0:
        raise ClusteringError("empty assignment")
    return 100.0 * len(set(assignment.crs)) / len(assignment)


def lut_to_json(model: ClusterModel, assignment: RatioAssignment) -> dict:
    """On-node look-up-table payload."""
    if len(assignment) != model.k:
        raise ClusteringError("assignment/model size mismatch")
    sel = model.feature_selection
    return {
        "location": model.location,
        "feature_selection": sel.names if sel is not None else None,
        "centroids": [list(map(float, c)) for c in model.centroids],
        "crs": list(assignment.crs),
        "seed": model.seed,
        "counts": list(model.counts),
    }


def lut_from_json(payload: dict):
    sel = payload.get("feature_selection")
    model = ClusterModel(
        k=len(payload["centroids"]),
        centroids=np.asarray(payload["centroids"], dtype=float),
        counts=tuple(payload.get("counts") or [0] * len(payload["centroids"])),
        seed=int(payload["seed"]),
        feature_selection=FeatureSelection.from_names(sel) if sel else None,
        location=payload.get("location"))
    return model, RatioAssignment(tuple(payload["crs"]))
