"""Rectangular Kohonen self-organizing map.

Online training: every epoch visits all samples in a freshly shuffled order;
for each sample the best-matching unit (BMU) is found and every node moves
towards the sample by ``lr * h``, with ``h`` a Gaussian of the grid distance
to the BMU. Learning rate and radius decay linearly from their start to their
end value over ``max_epochs``; both are held constant within an epoch.

Randomness comes from numpy's PCG64 bit generator seeded with
``SomConfig.seed``, so a given seed reproduces on every platform.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateDataError

logger = logging.getLogger(__name__)

INIT_METHODS = ("random_uniform_in_data_box", "pca_plane")
EARLY_STOP_TOL = 1e-6
EARLY_STOP_PATIENCE = 20


@dataclass(frozen=True)
class SomConfig:
    grid_width: int = 10
    grid_height: int = 10
    lr_start: float = 0.3
    lr_end: float = 0.005
    radius_start: float = 4.0
    radius_end: float = 0.1
    max_epochs: int = 1000
    seed: int = 0
    init: str = "random_uniform_in_data_box"
    early_stopping: bool = False

    def __post_init__(self):
        if self.grid_width < 1 or self.grid_height < 1:
            raise ValueError("grid dimensions must be positive")
        if not 0 < self.lr_end <= self.lr_start <= 1:
            raise ValueError("need 0 < lr_end <= lr_start <= 1")
        if not 0 < self.radius_end <= self.radius_start:
            raise ValueError("need 0 < radius_end <= radius_start")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.init not in INIT_METHODS:
            raise ValueError(f"unknown init {self.init!r}; expected one of {INIT_METHODS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SomConfig":
        return cls(**d)


@dataclass(frozen=True)
class SomGrid:
    width: int
    height: int
    weights: np.ndarray  # (height * width, dim), row-major node order

    def __post_init__(self):
        if self.weights.shape[0] != self.width * self.height or self.weights.ndim != 2:
            raise ValueError(f"weights shape {self.weights.shape} does not fit a {self.width}x{self.height} grid")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("grid weights must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.width * self.height

    def coords(self) -> np.ndarray:
        """(row, col) of every node, in linear index order."""
        rows, cols = np.divmod(np.arange(self.n_nodes), self.width)
        return np.column_stack([rows, cols]).astype(float)

    def node_position(self, index: int) -> tuple[int, int]:
        row, col = divmod(int(index), self.width)
        return row, col

    def plane(self, feature: int) -> np.ndarray:
        return self.weights[:, feature].reshape(self.height, self.width)


@dataclass(frozen=True)
class TrainedSom:
    grid: SomGrid
    qe_history: tuple[float, ...]
    config: SomConfig
    initial_qe: float = field(default=float("nan"))


def _as_data(data) -> np.ndarray:
    values = getattr(data, "values", data)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
        raise DegenerateDataError(f"expected a non-empty 2-D data matrix, got shape {values.shape}")
    return values


def init_grid(config: SomConfig, data) -> SomGrid:
    """Initial codebook, deterministic in ``(config, data)``."""
    x = _as_data(data)
    n_nodes = config.grid_width * config.grid_height
    if config.init == "random_uniform_in_data_box":
        rng = np.random.Generator(np.random.PCG64(config.seed))
        lo = x.min(axis=0)
        hi = x.max(axis=0)
        weights = lo + rng.random((n_nodes, x.shape[1])) * (hi - lo)
    else:
        weights = _pca_plane(x, config.grid_width, config.grid_height)
    return SomGrid(config.grid_width, config.grid_height, weights)


def _pca_plane(x: np.ndarray, width: int, height: int) -> np.ndarray:
    mean = x.mean(axis=0)
    if x.shape[0] < 2:
        return np.tile(mean, (width * height, 1))
    cov = np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval)[::-1]
    eigval = np.clip(eigval[order], 0.0, None)
    eigvec = eigvec[:, order]
    # eigenvector sign is arbitrary; pin it so the result is reproducible
    for j in range(eigvec.shape[1]):
        if eigvec[np.argmax(np.abs(eigvec[:, j])), j] < 0:
            eigvec[:, j] = -eigvec[:, j]
    axis_col = eigvec[:, 0] * math.sqrt(eigval[0])
    axis_row = eigvec[:, 1] * math.sqrt(eigval[1]) if eigvec.shape[1] > 1 else np.zeros_like(mean)
    cols = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    rows = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return mean + cc.reshape(-1, 1) * axis_col + rr.reshape(-1, 1) * axis_row


def _sq_dists(weights: np.ndarray, sample: np.ndarray) -> np.ndarray:
    diff = weights - sample
    return np.einsum("ij,ij->i", diff, diff)


def best_matching_unit(grid: SomGrid, sample) -> int:
    """Index of the nearest node (squared Euclidean); ties go to the lowest index."""
    sample = np.asarray(sample, dtype=float)
    if sample.shape != (grid.dim,):
        raise ValueError(f"sample has shape {sample.shape}, grid dim is {grid.dim}")
    # argmin returns the first minimum, which is the tie-break we want
    return int(np.argmin(_sq_dists(grid.weights, sample)))


def schedule_value(start: float, end: float, epoch: int, max_epochs: int) -> float:
    if max_epochs == 1:
        return float(start)
    if epoch == max_epochs - 1:
        return float(end)
    return start + (end - start) * epoch / (max_epochs - 1)


def neighborhood_weight(grid_dist_sq, radius: float):
    return np.exp(-np.asarray(grid_dist_sq, dtype=float) / (2.0 * radius * radius))


def grid_distance_sq(grid: SomGrid) -> np.ndarray:
    c = grid.coords()
    d = c[:, None, :] - c[None, :, :]
    return (d * d).sum(axis=-1)


def quantization_error(grid: SomGrid, data) -> float:
    """Mean Euclidean distance from each row to its BMU weight."""
    x = _as_data(data)
    if x.shape[1] != grid.dim:
        raise ValueError(f"data dim {x.shape[1]} does not match grid dim {grid.dim}")
    diff = x[:, None, :] - grid.weights[None, :, :]
    nearest = np.einsum("nkd,nkd->nk", diff, diff).min(axis=1)
    return float(np.sqrt(nearest).mean())


def project(grid: SomGrid, sample) -> tuple[int, int]:
    return grid.node_position(best_matching_unit(grid, sample))


def train(config: SomConfig, data, callback=None) -> TrainedSom:
    """Train a map on normalized data.

    ``callback(epoch, weights)`` is invoked after each epoch with a read-only
    view of the codebook; tests use it to check invariants during training.
    """
    x = _as_data(data)
    if not np.all(np.isfinite(x)):
        raise DegenerateDataError("training data contains non-finite values")
    grid = init_grid(config, x)
    weights = grid.weights.copy()
    dist_sq = grid_distance_sq(grid)
    # the shuffle stream is independent of the init stream
    rng = np.random.Generator(np.random.PCG64([config.seed, 1]))

    initial_qe = quantization_error(grid, x)
    history = []
    stale = 0
    for epoch in range(config.max_epochs):
        lr = schedule_value(config.lr_start, config.lr_end, epoch, config.max_epochs)
        radius = schedule_value(config.radius_start, config.radius_end, epoch, config.max_epochs)
        step = lr * neighborhood_weight(dist_sq, radius)
        for i in rng.permutation(x.shape[0]):
            diff = x[i] - weights
            bmu = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
            weights += step[bmu][:, None] * diff
        current = SomGrid(grid.width, grid.height, weights)
        qe = quantization_error(current, x)
        if callback is not None:
            view = weights.view()
            view.flags.writeable = False
            callback(epoch, view)
        if config.early_stopping and history and history[-1] - qe < EARLY_STOP_TOL:
            stale += 1
        else:
            stale = 0
        history.append(qe)
        if config.early_stopping and stale >= EARLY_STOP_PATIENCE:
            logger.info("early stop after epoch %d (qe %.6g)", epoch, qe)
            break
    final = SomGrid(grid.width, grid.height, weights.copy())
    return TrainedSom(final, tuple(history), config, initial_qe)
