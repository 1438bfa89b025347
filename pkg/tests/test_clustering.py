"""Clustering: k-means++ behavior, the separation index oracle, merging."""

import numpy as np
import pytest

from atcs.clustering import (CS_GRID, ClusteringError, ClusterModel,
                             RatioAssignment, assign, assign_many,
                             davies_bouldin, kmeans_fit, lut_from_json,
                             lut_to_json, merge_equal_adjacent)


def _blobs(rng, k=3, per=20, dim=2, spread=8.0):
    centers = spread * rng.standard_normal((k, dim))
    pts = np.concatenate([c + rng.standard_normal((per, dim))
                          for c in centers])
    return pts


def db_bruteforce(X, centroids):
    """Direct transcription of the pairwise-similarity definition."""
    k = len(centroids)
    d2 = ((X[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    sig = np.zeros(k)
    for i in range(k):
        members = X[labels == i]
        if len(members) == 0:
            return None
        sig[i] = np.mean(np.linalg.norm(members - centroids[i], axis=1))
    worst = np.zeros(k)
    for i in range(k):
        vals = []
        for j in range(k):
            if j == i:
                continue
            d = np.linalg.norm(centroids[i] - centroids[j])
            vals.append((sig[i] + sig[j]) / d)
        worst[i] = max(vals)
    return float(np.mean(worst))


def random_db_case(rng):
    """(model, points) with every cluster populated."""
    while True:
        n = int(rng.integers(6, 51))
        k = int(rng.integers(2, 6))
        dim = int(rng.integers(1, 6))
        X = rng.standard_normal((n, dim))
        idx = rng.choice(n, size=k, replace=False)
        centroids = X[idx]
        ref = db_bruteforce(X, centroids)
        if ref is None:
            continue
        counts = np.bincount(((X[:, None, :] - centroids[None]) ** 2)
                             .sum(axis=2).argmin(axis=1), minlength=k)
        model = ClusterModel(k=k, centroids=centroids,
                             counts=tuple(counts), seed=0)
        return model, X, ref


def test_davies_bouldin_oracle(rng):
    for trial in range(100):
        model, X, ref = random_db_case(rng)
        assert davies_bouldin(model, X) == pytest.approx(ref, abs=1e-9)


def test_kmeans_fit_basic(rng):
    X = _blobs(rng, k=3, per=25)
    model = kmeans_fit(X, k=3, seed=11)
    assert model.k == 3
    assert model.centroids.shape[0] == 3
    assert sum(model.counts) == len(X)
    assert all(c > 0 for c in model.counts)
    # labels match nearest centroid with low-id tie-break
    labels = assign_many(model, X)
    d = ((X[:, None, :] - model.centroids[None]) ** 2).sum(axis=2)
    assert np.array_equal(labels, d.argmin(axis=1))


def test_kmeans_deterministic(rng):
    X = _blobs(rng, k=4, per=15)
    m1 = kmeans_fit(X, k=4, seed=3)
    m2 = kmeans_fit(X, k=4, seed=3)
    assert np.array_equal(m1.centroids, m2.centroids)


def test_kmeans_relabel_canonical(rng):
    """Cluster ids follow the lexicographic order of the centroids."""
    X = _blobs(rng, k=3, per=20)
    model = kmeans_fit(X, k=3, seed=7)
    cents = model.centroids
    assert all(tuple(cents[i]) <= tuple(cents[i + 1])
               for i in range(len(cents) - 1))


def test_kmeans_k_larger_than_points():
    X = np.zeros((3, 2))
    with pytest.raises(ClusteringError):
        kmeans_fit(X, k=5, seed=0)


def test_assign_single_and_many(rng):
    X = _blobs(rng, k=2, per=10)
    model = kmeans_fit(X, k=2, seed=1)
    one = assign(model, X[0])
    many = assign_many(model, X)
    assert one == many[0]
    # equidistant point goes to the lower cluster id
    mid = model.centroids.mean(axis=0)
    assert assign(model, mid) == 0 or assign(model, mid) == int(
        np.argmin(((model.centroids - mid) ** 2).sum(axis=1)))


def test_cs_grid():
    assert CS_GRID == tuple(range(0, 100, 4))
    assert len(CS_GRID) == 25


def test_ratio_assignment_validation():
    RatioAssignment((0, 40, 96))
    RatioAssignment(())                    # empty is legal at this level
    with pytest.raises(ClusteringError):
        RatioAssignment((0, 41))           # off-grid


def test_merge_equal_adjacent(rng):
    # two tight pairs of blobs, far apart, so merged centroids keep their
    # members on the same side
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [60.0, 0.0], [64.0, 0.0]])
    X = np.concatenate([c + 0.3 * rng.standard_normal((10, 2))
                        for c in centers])
    model = kmeans_fit(X, k=4, seed=5)
    ratios = RatioAssignment((40, 40, 72, 72))
    merged_model, merged_ratios = merge_equal_adjacent(model, ratios)
    assert merged_model.k == 2
    assert tuple(merged_ratios.crs) == (40, 72)
    assert sum(merged_model.counts) == sum(model.counts)
    # members keep their ratio through the merge
    before = np.asarray(ratios.crs)[assign_many(model, X)]
    after = np.asarray(merged_ratios.crs)[assign_many(merged_model, X)]
    assert np.array_equal(before, after)


def test_merge_one_dim_is_adjacency_aware(rng):
    # centroids are ordered on the line, so equal crs separated by a
    # different one stay apart
    X = _blobs(rng, k=3, per=10, dim=1)
    model = kmeans_fit(X, k=3, seed=9)
    merged_model, merged_ratios = merge_equal_adjacent(
        model, RatioAssignment((20, 60, 20)))
    assert merged_model.k == 3
    assert tuple(merged_ratios.crs) == (20, 60, 20)


def test_merge_higher_dim_collapses_duplicates(rng):
    # no centroid ordering above one dimension: equal crs merge wherever
    # they sit
    X = _blobs(rng, k=3, per=10)
    model = kmeans_fit(X, k=3, seed=9)
    merged_model, merged_ratios = merge_equal_adjacent(
        model, RatioAssignment((20, 60, 20)))
    assert merged_model.k == 2
    assert tuple(merged_ratios.crs) == (20, 60)
    assert sum(merged_model.counts) == sum(model.counts)


def test_lut_json_round_trip(rng):
    X = _blobs(rng, k=2, per=10)
    model = kmeans_fit(X, k=2, seed=2)
    ratios = RatioAssignment((8, 88))
    payload = lut_to_json(model, ratios)
    model2, ratios2 = lut_from_json(payload)
    assert np.allclose(model2.centroids, model.centroids)
    assert tuple(model2.counts) == tuple(model.counts)
    assert tuple(ratios2.crs) == (8, 88)
