import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trollmap.clustering import (
    ClusterModel,
    assign_users,
    auto_cluster_count,
    correlation_ratio,
    field_significance,
    kmeans,
    kmeans_codebook,
    lloyd,
    silhouette_score,
)
from trollmap.errors import DegenerateDataError
from trollmap.features import FeatureMatrix
from trollmap.som import SomGrid


def wcss(points, labels):
    total = 0.0
    for c in set(labels):
        members = [p for p, l in zip(points, labels) if l == c]
        mean = [sum(col) / len(members) for col in zip(*members)]
        total += sum(sum((a - b) ** 2 for a, b in zip(p, mean)) for p in members)
    return total


def brute_silhouette(points, labels):
    n = len(points)
    dist = [[math.dist(points[i], points[j]) for j in range(n)] for i in range(n)]
    scores = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = sum(dist[i][j] for j in own) / len(own)
        b = min(
            sum(dist[i][j] for j in range(n) if labels[j] == c) / sum(1 for j in range(n) if labels[j] == c)
            for c in set(labels) if c != labels[i]
        )
        scores.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return sum(scores) / n


def blobs(centers, per, spread, seed):
    rng = np.random.default_rng(seed)
    return np.vstack([c + spread * rng.standard_normal((per, len(c))) for c in centers])


def grid_of(points, width=None):
    n = len(points)
    width = width or n
    return SomGrid(width, n // width, np.asarray(points, dtype=float))


def test_k_equals_node_count():
    pts = np.random.default_rng(0).random((6, 3))
    m = kmeans_codebook(grid_of(pts, 3), 6, seed=1)
    assert sorted(m.node_to_cluster) == list(range(6))
    np.testing.assert_array_equal(m.centroids[m.node_to_cluster], pts)


def test_k_one_gives_mean():
    pts = np.random.default_rng(0).random((8, 3))
    m = kmeans_codebook(grid_of(pts, 4), 1, seed=1)
    assert m.k == 1 and set(m.node_to_cluster) == {0}
    np.testing.assert_allclose(m.centroids[0], pts.mean(axis=0), atol=1e-15)


def test_k_too_large():
    with pytest.raises(ValueError):
        kmeans_codebook(grid_of(np.zeros((4, 2)), 2), 5, seed=0)


@pytest.mark.parametrize("seed", range(5))
def test_two_blobs_match_exhaustive_optimum(seed):
    pts = blobs([np.zeros(3), np.full(3, 5.0)], 5, 0.3, seed)  # 10 nodes
    m = kmeans_codebook(grid_of(pts, 5), 2, seed=seed)
    best = min(
        wcss(pts.tolist(), (0,) + labels)
        for labels in itertools.product((0, 1), repeat=len(pts) - 1)
        if 1 in labels
    )
    assert wcss(pts.tolist(), m.node_to_cluster.tolist()) == pytest.approx(best, rel=1e-12)
    assert len(set(m.node_to_cluster[:5])) == 1 and len(set(m.node_to_cluster[5:])) == 1
    assert m.node_to_cluster[0] != m.node_to_cluster[5]


def test_empty_cluster_repair_with_duplicate_points():
    pts = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]])
    res = kmeans(pts, 4, seed=0)
    assert sorted(np.bincount(res.labels, minlength=4)) == [1, 1, 1, 3]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_objective_never_increases(seed, k):
    pts = np.random.default_rng(seed).random((25, 4))
    run = lloyd(pts, k, np.random.default_rng(seed))
    hist = np.array(run.inertia_history)
    assert np.all(np.diff(hist) <= 1e-12 * hist[0])
    assert run.inertia == pytest.approx(wcss(pts.tolist(), run.labels.tolist()), rel=1e-9)


def test_canonical_relabeling_sorts_by_message_count():
    rng = np.random.default_rng(2)
    centers = [np.r_[m, np.zeros(3)] for m in (0.1, 0.9, 0.5)]
    pts = blobs(centers, 4, 0.01, 3)
    m = kmeans_codebook(grid_of(pts, 4), 3, seed=int(rng.integers(100)))
    assert list(m.centroids[:, 0]) == sorted(m.centroids[:, 0], reverse=True)
    assert m.node_to_cluster[4] == 0  # the 0.9 blob


def test_relabeling_is_a_permutation():
    pts = blobs([np.zeros(2), np.ones(2) * 4, np.array([8.0, 0.0])], 6, 0.5, 1)
    m = kmeans_codebook(grid_of(pts, 6), 3, seed=5)
    raw = kmeans(pts, 3, seed=5)
    pairs = set(zip(raw.labels.tolist(), m.node_to_cluster.tolist()))
    assert len(pairs) == 3


def test_silhouette_matches_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(10):
        n = int(rng.integers(5, 51))
        pts = rng.random((n, 3))
        k = int(rng.integers(2, min(6, n)))
        labels = rng.integers(0, k, size=n)
        labels[:k] = np.arange(k)
        assert silhouette_score(pts, labels) == pytest.approx(brute_silhouette(pts.tolist(), labels.tolist()), abs=1e-9)


def test_silhouette_with_singletons():
    pts = np.array([[0.0], [0.1], [5.0]])
    labels = np.array([0, 0, 1])
    assert silhouette_score(pts, labels) == pytest.approx(brute_silhouette(pts.tolist(), labels.tolist()), abs=1e-12)


def test_two_blob_split_beats_every_three_way_split():
    pts = blobs([np.zeros(2), np.full(2, 6.0)], 4, 0.4, 7)
    two = silhouette_score(pts, np.array([0] * 4 + [1] * 4))
    best3 = max(
        brute_silhouette(pts.tolist(), list(labels))
        for labels in itertools.product(range(3), repeat=len(pts))
        if len(set(labels)) == 3 and labels[0] == 0
    )
    assert two > best3


@pytest.mark.parametrize("g", [2, 3, 4, 5])
def test_auto_count_recovers_blob_count(g):
    rng = np.random.default_rng(g)
    centers = rng.standard_normal((g, 12))
    centers *= 2.0 / np.min([np.linalg.norm(a - b) for a, b in itertools.combinations(centers, 2)])
    labels = np.arange(100) % g
    pts = centers[labels] + 0.02 * rng.standard_normal((100, 12))
    k, model = auto_cluster_count(SomGrid(10, 10, pts), seed=3)
    assert k == g == model.k


def test_auto_count_degenerate_grid():
    with pytest.warns(UserWarning, match="identical"):
        k, model = auto_cluster_count(SomGrid(3, 3, np.ones((9, 2))), 2, 5, seed=0)
    assert k == 2 == model.k


def test_auto_count_range_checks():
    g = SomGrid(2, 2, np.random.default_rng(0).random((4, 2)))
    with pytest.raises(ValueError):
        auto_cluster_count(g, 1, 3)
    with pytest.raises(ValueError):
        auto_cluster_count(g, 2, 5)


def test_auto_count_independent_of_workers():
    pts = np.random.default_rng(4).random((36, 5))
    g = SomGrid(6, 6, pts)
    k1, m1 = auto_cluster_count(g, 2, 10, seed=9, workers=1)
    k4, m4 = auto_cluster_count(g, 2, 10, seed=9, workers=4)
    assert k1 == k4
    assert m1.node_to_cluster.tobytes() == m4.node_to_cluster.tobytes()
    assert m1.centroids.tobytes() == m4.centroids.tobytes()


def _fm(values, ids=None):
    values = np.asarray(values, dtype=float)
    ids = ids or tuple(f"u{i}" for i in range(len(values)))
    names = tuple(f"x{j}" for j in range(values.shape[1]))
    return FeatureMatrix(tuple(ids), values, names)


def test_assign_users():
    w = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]])
    g = SomGrid(3, 1, w)
    model = ClusterModel(3, np.array([1, 2, 0]), w[[2, 0, 1]])
    m = _fm([[5.0, 5.0], [0.1, 0.0], [0.1, 0.0]])
    out = assign_users(g, model, m)
    assert out == {"u0": 0, "u1": 1, "u2": 1}


def test_significance_examples():
    # column 0 separates perfectly, column 1 is hand-computed, column 2 constant
    m = _fm([[0, 0.2, 3], [0, 0.5, 3], [1, 0.9, 3], [1, 0.3, 3]])
    rep = field_significance(m, {"u0": 0, "u1": 0, "u2": 1, "u3": 1})
    # between = 2*(0.35-0.475)^2 + 2*(0.6-0.475)^2 = 0.0625, total = 0.2875
    assert rep.eta_squared[0] == 1.0
    assert abs(rep.eta_squared[1] - 5 / 23) < 1e-9
    assert rep.eta_squared[2] == 0.0
    assert rep.scores[0] == 100.0 and rep.scores[2] == 0.0
    assert rep.scores[1] == pytest.approx(500 / 23)


def test_significance_needs_two_clusters():
    m = _fm([[0, 1], [1, 2]])
    with pytest.raises(DegenerateDataError, match="single cluster"):
        field_significance(m, {"u0": 3, "u1": 3})


def test_constant_column_is_exactly_zero_even_with_rounding():
    col = np.full(7, 0.1)  # sum/len of 0.1s is not exactly 0.1
    assert correlation_ratio(col, np.array([0, 0, 1, 1, 1, 2, 2])) == 0.0


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(-50, 50))
def test_significance_scale_free(seed, scale, shift):
    rng = np.random.default_rng(seed)
    vals = rng.random((12, 3))
    labels = {f"u{i}": int(i % 3) for i in range(12)}
    base = field_significance(_fm(vals), labels)
    vals2 = vals.copy()
    vals2[:, 1] = vals2[:, 1] * scale + shift
    moved = field_significance(_fm(vals2), labels)
    np.testing.assert_allclose(moved.eta_squared, base.eta_squared, rtol=1e-9, atol=1e-12)


def test_significance_table_layout():
    m = _fm([[0, 0.2], [1, 0.5]])
    text = field_significance(m, {"u0": 0, "u1": 1}).table()
    assert text.splitlines()[1].split() == ["x0", "100.0"]
