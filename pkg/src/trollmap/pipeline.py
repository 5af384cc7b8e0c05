"""End-to-end orchestration: comments -> features -> map -> clusters -> report.

One run seed governs everything. Stage seeds are drawn from
``numpy.random.SeedSequence([seed, stage])`` so they are stable across
platforms and independent of each other.
"""

from __future__ import annotations

import contextlib
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import ClusterModel, assign_users, auto_cluster_count, field_significance
from .corpus import group_by_user, parse_comments
from .detect import DetectionParams, TrollReport, build_report, identify_troll_clusters
from .errors import ArtifactError, InputError, TrollmapError
from .features import (
    DEFAULT_SYMBOLS,
    FEATURE_NAMES,
    FeatureMatrix,
    NormalizationParams,
    SymbolSet,
    apply_normalization,
    build_matrix,
    extract_features,
    fit_normalization,
    write_matrix_csv,
)
from .planes import write_planes
from .som import SomConfig, SomGrid, TrainedSom, train

logger = logging.getLogger(__name__)

MODEL_FORMAT = "trollmap-model"
MODEL_VERSION = 1

STAGE_SOM = 0
STAGE_CLUSTER = 1

FEATURES_FILE = "features.csv"
MODEL_FILE = "model.json"
REPORT_FILE = "report.json"
PLANES_DIR = "planes"


def derive_seed(seed: int, stage: int) -> int:
    return int(np.random.SeedSequence([seed, stage]).generate_state(1, np.uint64)[0])


@dataclass
class PipelineConfig:
    input: str | None = None
    format: str = "jsonl"
    lenient: bool = False
    min_messages: int = 1
    symbols: tuple[str, ...] = DEFAULT_SYMBOLS
    homoglyphs: bool = False
    grid_width: int = 10
    grid_height: int = 10
    lr_start: float = 0.3
    lr_end: float = 0.005
    radius_start: float = 4.0
    radius_end: float = 0.1
    max_epochs: int = 1000
    init: str = "random_uniform_in_data_box"
    early_stopping: bool = False
    k_min: int = 2
    k_max: int = 15
    z_threshold: float = 2.0
    max_cluster_fraction: float = 0.2
    output_dir: str | None = None
    seed: int = 0
    workers: int = 1
    plane_scale: int = 1

    def __post_init__(self):
        self.symbols = tuple(self.symbols)
        if len(self.symbols) != len(DEFAULT_SYMBOLS):
            raise ValueError(f"symbol override must list exactly {len(DEFAULT_SYMBOLS)} symbols")
        SymbolSet(self.symbols)
        if self.min_messages < 1:
            raise ValueError("min_messages must be >= 1")
        if not 2 <= self.k_min <= self.k_max:
            raise ValueError("need 2 <= k_min <= k_max")
        self.som_config()

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["symbols"] = list(self.symbols)
        return d

    def som_config(self) -> SomConfig:
        return SomConfig(
            grid_width=self.grid_width,
            grid_height=self.grid_height,
            lr_start=self.lr_start,
            lr_end=self.lr_end,
            radius_start=self.radius_start,
            radius_end=self.radius_end,
            max_epochs=self.max_epochs,
            seed=derive_seed(self.seed, STAGE_SOM),
            init=self.init,
            early_stopping=self.early_stopping,
        )

    def detection_params(self) -> DetectionParams:
        return DetectionParams(self.z_threshold, self.max_cluster_fraction)


@dataclass
class Model:
    """Trained map plus everything needed to reuse it on the same features."""

    trained: TrainedSom
    norm: NormalizationParams
    seed: int
    feature_names: tuple[str, ...] = FEATURE_NAMES
    clustering: ClusterModel | None = None
    k_range: tuple[int, int] | None = None

    @property
    def grid(self) -> SomGrid:
        return self.trained.grid

    def to_dict(self) -> dict:
        g = self.grid
        d = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "seed": self.seed,
            "config": self.trained.config.to_dict(),
            "feature_names": list(self.feature_names),
            "normalization": self.norm.to_dict(),
            "grid": {"width": g.width, "height": g.height, "dim": g.dim},
            "weights": [[float(v) for v in row] for row in g.weights],
            "initial_qe": float(self.trained.initial_qe),
            "qe_history": [float(q) for q in self.trained.qe_history],
        }
        if self.clustering is not None:
            d["clustering"] = self.clustering.to_dict()
            d["clustering"]["k_min"], d["clustering"]["k_max"] = self.k_range
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Model":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"model file is not valid JSON: {exc}") from None
        if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
            raise ArtifactError("not a trollmap model file")
        try:
            config = SomConfig.from_dict(d["config"])
            g = d["grid"]
            weights = np.asarray(d["weights"], dtype=float).reshape(g["width"] * g["height"], g["dim"])
            grid = SomGrid(int(g["width"]), int(g["height"]), weights)
            trained = TrainedSom(grid, tuple(d["qe_history"]), config, float(d["initial_qe"]))
            norm = NormalizationParams.from_dict(d["normalization"])
            clustering = None
            k_range = None
            if "clustering" in d:
                clustering = ClusterModel.from_dict(d["clustering"])
                k_range = (int(d["clustering"]["k_min"]), int(d["clustering"]["k_max"]))
            return cls(trained, norm, int(d["seed"]), tuple(d["feature_names"]), clustering, k_range)
        except (KeyError, TypeError, ValueError) as exc:
            raise ArtifactError(f"corrupt model file: {exc}") from None


@contextlib.contextmanager
def stage(name: str):
    """Tag any error escaping the block with the pipeline stage it came from."""
    try:
        yield
    except (TrollmapError, OSError) as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise
    except ValueError as exc:
        err = InputError(str(exc))
        err.stage = name
        raise err from exc


def extract_stage(raw: bytes, config: PipelineConfig) -> FeatureMatrix:
    with stage("corpus"):
        comments = parse_comments(raw, config.format, lenient=config.lenient)
        if not comments:
            raise InputError("input contains no comments")
        docs = group_by_user(comments, config.min_messages)
        if not docs:
            raise InputError(f"no user has at least {config.min_messages} messages")
    with stage("features"):
        symbols = SymbolSet(tuple(config.symbols))
        return build_matrix([extract_features(d, symbols, config.homoglyphs) for d in docs])


def train_stage(matrix: FeatureMatrix, config: PipelineConfig) -> Model:
    with stage("som"):
        norm = fit_normalization(matrix)
        normalized = apply_normalization(matrix, norm)
        trained = train(config.som_config(), normalized)
        return Model(trained, norm, config.seed, tuple(matrix.feature_names))


def cluster_stage(model: Model, config: PipelineConfig) -> ClusterModel:
    with stage("clustering"):
        k_max = min(config.k_max, model.grid.n_nodes)
        _, clustering = auto_cluster_count(
            model.grid, config.k_min, k_max, derive_seed(model.seed, STAGE_CLUSTER), workers=config.workers
        )
        model.clustering = clustering
        model.k_range = (config.k_min, k_max)
        return clustering


def detect_stage(model: Model, matrix: FeatureMatrix, config: PipelineConfig) -> TrollReport:
    """Cluster the codebook, assign users and assemble the report.

    ``matrix`` holds raw features; it is normalized with the model's params.
    """
    if tuple(matrix.feature_names) != tuple(model.feature_names):
        raise ArtifactError("feature columns of the matrix and the model differ")
    clustering = cluster_stage(model, config)
    with stage("detect"):
        normalized = apply_normalization(matrix, model.norm)
        assignments = assign_users(model.grid, clustering, normalized)
        significance = field_significance(normalized, assignments)
        params = config.detection_params()
        flagged = identify_troll_clusters(clustering, matrix, assignments, model.norm, params)
        metadata = {
            "version": __version__,
            "seed": model.seed,
            "som": model.trained.config.to_dict(),
            "grid": {"width": model.grid.width, "height": model.grid.height},
            "k": clustering.k,
            "k_range": list(model.k_range),
            "silhouette": float(clustering.silhouette),
            "detection": dataclasses.asdict(params),
            "final_qe": float(model.trained.qe_history[-1]),
            "n_users": len(matrix),
        }
        return build_report(matrix, model.norm, clustering, assignments, significance, flagged, metadata)


def export_planes(model: Model, out_dir, config: PipelineConfig | None = None):
    if model.clustering is None:
        cluster_stage(model, config or PipelineConfig())
    with stage("export-planes"):
        return write_planes(
            model.grid.weights,
            model.grid.width,
            model.grid.height,
            model.feature_names,
            model.clustering.node_to_cluster,
            out_dir,
            scale=(config.plane_scale if config else 1),
        )


def run_pipeline(config: PipelineConfig, raw: bytes | None = None) -> TrollReport:
    """Run all stages; write artifacts when ``config.output_dir`` is set.

    ``raw`` overrides reading ``config.input``.
    """
    if raw is None:
        if config.input is None:
            raise InputError("no input given")
        with stage("corpus"):
            raw = Path(config.input).read_bytes()
    matrix = extract_stage(raw, config)
    model = train_stage(matrix, config)
    report = detect_stage(model, matrix, config)
    if config.output_dir is not None:
        with stage("write"):
            out = Path(config.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / FEATURES_FILE).write_text(write_matrix_csv(matrix), encoding="utf-8")
            (out / MODEL_FILE).write_text(model.to_json(), encoding="utf-8")
            (out / REPORT_FILE).write_text(report.to_json(), encoding="utf-8")
        export_planes(model, out / PLANES_DIR, config)
    logger.info("flagged %d user(s) in %d cluster(s)", len(report.trolls), len(report.troll_clusters))
    return report
