"""Troll-cluster identification and the final report.

A cluster is flagged when its centroid message count (in raw units) is an
outlier among users, ``> mean + z * std`` of per-user message counts, and it
is small, holding at most ``max_cluster_fraction`` of all users. Every
cluster's centroid is kept in the report so a reviewer can overrule the
heuristic.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .clustering import ClusterModel, SignificanceReport
from .errors import ArtifactError
from .features import M_INDEX, FeatureMatrix, NormalizationParams, denormalize

REPORT_FORMAT = "trollmap-report"
REPORT_VERSION = 1


@dataclass(frozen=True)
class DetectionParams:
    z_threshold: float = 2.0
    max_cluster_fraction: float = 0.2


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    cluster_id: int
    features: dict
    troll: bool


@dataclass(frozen=True)
class ClusterRecord:
    cluster_id: int
    size: int
    n_nodes: int
    centroid: dict
    troll_cluster: bool


@dataclass(frozen=True)
class TrollReport:
    users: tuple[UserRecord, ...]
    clusters: tuple[ClusterRecord, ...]
    significance: SignificanceReport
    metadata: dict

    @property
    def trolls(self) -> list[str]:
        return [u.user_id for u in self.users if u.troll]

    @property
    def troll_clusters(self) -> list[int]:
        return [c.cluster_id for c in self.clusters if c.troll_cluster]

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "metadata": self.metadata,
            "trolls": self.trolls,
            "clusters": [asdict(c) for c in self.clusters],
            "significance": [
                {"feature": n, "percent": round(float(s), 1), "eta_squared": float(e)}
                for n, s, e in zip(
                    self.significance.feature_names, self.significance.scores, self.significance.eta_squared
                )
            ],
            "users": [asdict(u) for u in self.users],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrollReport":
        if d.get("format") != REPORT_FORMAT:
            raise ArtifactError("not a troll report")
        try:
            names = tuple(s["feature"] for s in d["significance"])
            eta = np.array([s["eta_squared"] for s in d["significance"]], dtype=float)
            top = eta.max()
            scores = 100.0 * eta / top if top > 0 else np.zeros_like(eta)
            return cls(
                tuple(UserRecord(**u) for u in d["users"]),
                tuple(ClusterRecord(**c) for c in d["clusters"]),
                SignificanceReport(names, eta, scores),
                d["metadata"],
            )
        except (KeyError, TypeError) as exc:
            raise ArtifactError(f"malformed report: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "TrollReport":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"report is not valid JSON: {exc}") from None


def cluster_sizes(assignments: Mapping[str, int], k: int) -> np.ndarray:
    return np.bincount(np.fromiter(assignments.values(), dtype=int, count=len(assignments)), minlength=k)


def identify_troll_clusters(
    model: ClusterModel,
    matrix: FeatureMatrix,
    assignments: Mapping[str, int],
    norm: NormalizationParams,
    params: DetectionParams = DetectionParams(),
) -> set[int]:
    """Flag small clusters whose centroid message count is an outlier.

    ``matrix`` holds raw (unnormalized) features; ``norm`` maps the model's
    centroids back to raw units. Clusters without users are never flagged.
    """
    if model.k < 2 or not len(matrix):
        return set()
    m = matrix.values[:, M_INDEX]
    cutoff = m.mean() + params.z_threshold * m.std()
    if math.isnan(cutoff):
        return set()
    raw_m = denormalize(model.centroids, norm)[:, M_INDEX]
    sizes = cluster_sizes(assignments, model.k)
    limit = params.max_cluster_fraction * len(matrix)
    return {
        c for c in range(model.k)
        if raw_m[c] > cutoff and 0 < sizes[c] <= limit
    }


def build_report(
    matrix: FeatureMatrix,
    norm: NormalizationParams,
    model: ClusterModel,
    assignments: Mapping[str, int],
    significance: SignificanceReport,
    troll_clusters: set[int],
    metadata: dict,
) -> TrollReport:
    """Assemble the report; ``matrix`` holds raw features."""
    missing = set(assignments) - set(matrix.user_ids)
    if missing:
        raise ArtifactError(f"assigned users missing from the feature matrix: {sorted(missing)[:5]}")
    unassigned = set(matrix.user_ids) - set(assignments)
    if unassigned:
        raise ArtifactError(f"users without a cluster: {sorted(unassigned)[:5]}")

    names = matrix.feature_names
    rows = dict(zip(matrix.user_ids, matrix.values))
    users = tuple(
        UserRecord(
            uid,
            int(assignments[uid]),
            {n: float(v) for n, v in zip(names, rows[uid])},
            int(assignments[uid]) in troll_clusters,
        )
        for uid in sorted(matrix.user_ids)
    )
    sizes = cluster_sizes(assignments, model.k)
    raw_centroids = denormalize(model.centroids, norm)
    clusters = tuple(
        ClusterRecord(
            c,
            int(sizes[c]),
            int(model.members(c).size),
            {n: float(v) for n, v in zip(names, raw_centroids[c])},
            c in troll_clusters,
        )
        for c in range(model.k)
    )
    return TrollReport(users, clusters, significance, metadata)
