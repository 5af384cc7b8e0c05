"""Second-level clustering of a trained codebook.

Nodes (not users) are grouped with k-means; users inherit the cluster of
their BMU. The number of clusters is the k in ``[k_min, k_max]`` with the
highest mean silhouette over the node weights.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DegenerateDataError
from .features import M_INDEX, FeatureMatrix
from .som import SomGrid, best_matching_unit

logger = logging.getLogger(__name__)

MAX_ITER = 300
N_INIT = 10


@dataclass(frozen=True)
class ClusterModel:
    k: int
    node_to_cluster: np.ndarray
    centroids: np.ndarray
    silhouette: float = field(default=float("nan"))

    def __post_init__(self):
        labels = self.node_to_cluster
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise ValueError("cluster id out of range")
        if len(np.unique(labels)) != self.k:
            raise ValueError("every cluster id must own at least one node")

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.node_to_cluster == cluster)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "node_to_cluster": [int(c) for c in self.node_to_cluster],
            "centroids": [[float(v) for v in row] for row in self.centroids],
            "silhouette": float(self.silhouette),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        return cls(
            int(d["k"]),
            np.asarray(d["node_to_cluster"], dtype=int),
            np.asarray(d["centroids"], dtype=float),
            float(d.get("silhouette", float("nan"))),
        )


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...]
    n_iter: int


@dataclass(frozen=True)
class SignificanceReport:
    feature_names: tuple[str, ...]
    eta_squared: np.ndarray
    scores: np.ndarray

    def as_dict(self, decimals: int | None = None) -> dict:
        if decimals is None:
            return {n: float(s) for n, s in zip(self.feature_names, self.scores)}
        return {n: round(float(s), decimals) for n, s in zip(self.feature_names, self.scores)}

    def table(self) -> str:
        width = max(len(n) for n in self.feature_names)
        lines = [f"{'feature':<{width}}  significance_%"]
        lines += [f"{n:<{width}}  {s:.1f}" for n, s in zip(self.feature_names, self.scores)]
        return "\n".join(lines)


def _sq_dist_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # explicit differences rather than the |a|^2 - 2ab + |b|^2 trick: exact
    # zeros for coincident points and no BLAS-dependent rounding
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dist_matrix(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dist_matrix(points, points[idx : idx + 1])[:, 0])
    return points[chosen].copy()


def _repair_empty(points, labels, centroids, k):
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        own = np.einsum("ij,ij->i", points - centroids[labels], points - centroids[labels])
        movable = counts[labels] > 1
        own = np.where(movable, own, -1.0)
        far = int(np.argmax(own))
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] = 1
        centroids[j] = points[far]
    return labels


def _centroids(points, labels, k):
    return np.array([points[labels == j].mean(axis=0) for j in range(k)])


def _wcss(points, labels, centroids) -> float:
    resid = points - centroids[labels]
    return float(np.einsum("ij,ij->", resid, resid))


def _hartigan_candidates(points, labels, counts, sums, start):
    """Indices >= start that might gain from a move, by a slightly loose test.

    A point failing this screen also fails the exact test in
    ``_hartigan_pass`` as long as no other point moves in between.
    """
    rest = points[start:]
    own_label = labels[start:]
    rows = np.arange(len(rest))
    d = _sq_dist_matrix(rest, sums / counts[:, None])
    own = counts[own_label]
    gain = own / np.maximum(own - 1, 1) * d[rows, own_label]
    gain[own <= 1] = -np.inf
    cost = d * (counts / (counts + 1))
    cost[rows, own_label] = np.inf
    return start + np.flatnonzero(cost.min(axis=1) < gain * (1 + 1e-9))


def _hartigan_pass(points, labels, k) -> bool:
    """Move single points wherever that lowers the within-cluster sum of squares.

    Unlike a Lloyd step this accounts for the centroid shift a move causes,
    so it can pull a stray point out of a small cluster it is dragging along.
    Points are visited in order; only screened candidates get the exact test.
    """
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.array([points[labels == j].sum(axis=0) for j in range(k)])
    moved = False
    candidates = _hartigan_candidates(points, labels, counts, sums, 0)
    while candidates.size:
        i = int(candidates[0])
        x = points[i]
        a = labels[i]
        centroids = sums / counts[:, None]
        d = ((centroids - x) ** 2).sum(axis=1)
        remove_gain = counts[a] / (counts[a] - 1) * d[a]
        add_cost = counts / (counts + 1) * d
        add_cost[a] = np.inf
        b = int(np.argmin(add_cost))
        # relative margin keeps float noise from triggering endless swaps
        if add_cost[b] < remove_gain * (1 - 1e-12):
            counts[a] -= 1
            counts[b] += 1
            sums[a] -= x
            sums[b] += x
            labels[i] = b
            moved = True
            candidates = _hartigan_candidates(points, labels, counts, sums, i + 1)
        else:
            candidates = candidates[1:]
    return moved


def lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = MAX_ITER) -> KMeansResult:
    """One k-means++ seeded run: Lloyd iterations, then Hartigan refinement.

    Lloyd stops at an assignment fixed point or after ``max_iter``
    iterations; empty clusters take over the point farthest from its own
    centroid. Hartigan passes then run until no single move helps (again at
    most ``max_iter``). The recorded objective never increases.
    """
    points = np.asarray(points, dtype=float)
    centroids = _kmeans_pp(points, k, rng)
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = np.argmin(_sq_dist_matrix(points, centroids), axis=1)
        new = _repair_empty(points, new, centroids, k)
        centroids = _centroids(points, new, k)
        history.append(_wcss(points, new, centroids))
        if labels is not None and np.array_equal(new, labels):
            labels = new
            break
        labels = new
    labels = labels.copy()
    for _ in range(max_iter):
        if not _hartigan_pass(points, labels, k):
            break
        centroids = _centroids(points, labels, k)
        history.append(_wcss(points, labels, centroids))
        n_iter += 1
    return KMeansResult(labels, centroids, history[-1], tuple(history), n_iter)


def kmeans(points: np.ndarray, k: int, seed: int, n_init: int = N_INIT) -> KMeansResult:
    """Best of ``n_init`` seeded runs by within-cluster sum of squares."""
    points = np.asarray(points, dtype=float)
    if not 1 <= k <= points.shape[0]:
        raise ValueError(f"k={k} must lie in [1, {points.shape[0]}]")
    rng = np.random.Generator(np.random.PCG64(seed))
    best = None
    for _ in range(n_init):
        run = lloyd(points, k, rng)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def canonical_order(centroids: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Old cluster ids sorted so the new id 0 has the largest M centroid.

    Ties fall back to the smallest member node index.
    """
    k = centroids.shape[0]
    first = [int(np.flatnonzero(labels == j)[0]) for j in range(k)]
    return np.array(sorted(range(k), key=lambda j: (-centroids[j, M_INDEX], first[j])))


def kmeans_codebook(grid: SomGrid, k: int, seed: int, n_init: int = N_INIT) -> ClusterModel:
    if k > grid.n_nodes:
        raise ValueError(f"k={k} exceeds the number of nodes ({grid.n_nodes})")
    res = kmeans(grid.weights, k, seed, n_init)
    order = canonical_order(res.centroids, res.labels)
    relabel = np.empty(k, dtype=int)
    relabel[order] = np.arange(k)
    return ClusterModel(k, relabel[res.labels], res.centroids[order])


def silhouette_samples(points: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-point silhouette; points alone in their cluster score 0."""
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    dist = np.sqrt(_sq_dist_matrix(points, points))
    ids = np.unique(labels)
    onehot = (labels[:, None] == ids[None, :]).astype(float)
    sizes = onehot.sum(axis=0)
    sums = np.einsum("ij,jc->ic", dist, onehot)
    own = np.searchsorted(ids, labels)
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[np.arange(len(labels)), own] / np.maximum(own_size - 1, 1), 0.0)
    other = sums / sizes[None, :]
    other[np.arange(len(labels)), own] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_size > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return s


def silhouette_score(points: np.ndarray, labels: np.ndarray) -> float:
    if len(np.unique(labels)) < 2:
        raise ValueError("silhouette needs at least two clusters")
    return float(silhouette_samples(points, labels).mean())


def _cluster_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])


def auto_cluster_count(grid: SomGrid, k_min: int = 2, k_max: int = 15, seed: int = 0, workers: int = 1):
    """Pick k by maximal mean silhouette of the node weights.

    Returns ``(k, ClusterModel)``. Ties go to the smaller k. Each k has its own
    derived seed, so ``workers`` only changes wall time, never the result.
    """
    if k_min < 2:
        raise ValueError("k_min must be >= 2")
    if k_max > grid.n_nodes:
        raise ValueError(f"k_max={k_max} exceeds the number of nodes ({grid.n_nodes})")
    if k_max < k_min:
        raise ValueError("k_max must be >= k_min")
    if np.all(grid.weights == grid.weights[0]):
        warnings.warn(f"all node weights are identical; falling back to k={k_min}", stacklevel=2)
        model = kmeans_codebook(grid, k_min, _cluster_seed(seed, k_min))
        return k_min, model

    def fit(k):
        model = kmeans_codebook(grid, k, _cluster_seed(seed, k))
        score = silhouette_score(grid.weights, model.node_to_cluster)
        return ClusterModel(model.k, model.node_to_cluster, model.centroids, score)

    ks = range(k_min, k_max + 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(fit, ks))
    else:
        models = [fit(k) for k in ks]
    best = models[0]
    for m in models[1:]:
        if m.silhouette > best.silhouette:
            best = m
    logger.debug("silhouette by k: %s", {m.k: round(m.silhouette, 4) for m in models})
    return best.k, best


def assign_users(grid: SomGrid, model: ClusterModel, matrix: FeatureMatrix) -> dict[str, int]:
    return {
        uid: int(model.node_to_cluster[best_matching_unit(grid, row)])
        for uid, row in zip(matrix.user_ids, matrix.values)
    }


def correlation_ratio(values: np.ndarray, labels: np.ndarray) -> float:
    """Between-group over total sum of squares; 0 for a constant column."""
    values = np.asarray(values, dtype=float)
    if np.ptp(values) == 0:
        return 0.0
    mean = values.mean()
    total = float(((values - mean) ** 2).sum())
    between = 0.0
    for c in np.unique(labels):
        group = values[labels == c]
        between += group.size * (group.mean() - mean) ** 2
    return between / total


def field_significance(matrix: FeatureMatrix, assignments: Mapping[str, int]) -> SignificanceReport:
    """Score each feature by its correlation ratio, scaled so the best is 100."""
    try:
        labels = np.array([assignments[uid] for uid in matrix.user_ids])
    except KeyError as exc:
        raise DegenerateDataError(f"user {exc.args[0]!r} has no cluster assignment") from None
    if len(np.unique(labels)) < 2:
        raise DegenerateDataError(
            "significance is undefined with a single cluster; lower k_min or use more data"
        )
    eta = np.array([correlation_ratio(matrix.values[:, j], labels) for j in range(matrix.values.shape[1])])
    top = eta.max()
    scores = 100.0 * eta / top if top > 0 else np.zeros_like(eta)
    return SignificanceReport(tuple(matrix.feature_names), eta, scores)
