"""Component planes and cluster maps as plain-text netpbm images.

Feature planes are P2 graymaps, one pixel per node (row-major, row 0 on
top). Shading is linear with the plane's minimum drawn white (255) and its
maximum black (0); a constant plane is all white. The cluster map is a P3
pixmap colored from a fixed categorical palette.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAXVAL = 255

# Tableau-like categorical palette; cycles when k exceeds its length.
PALETTE = (
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40), (148, 103, 189),
    (140, 86, 75), (227, 119, 194), (127, 127, 127), (188, 189, 34), (23, 190, 207),
    (174, 199, 232), (255, 187, 120), (152, 223, 138), (255, 152, 150), (197, 176, 213),
)


def gray_levels(plane: np.ndarray) -> np.ndarray:
    lo = plane.min()
    hi = plane.max()
    if hi == lo:
        return np.full(plane.shape, MAXVAL, dtype=int)
    scaled = (plane - lo) / (hi - lo)
    return np.rint(MAXVAL * (1.0 - scaled)).astype(int)


def _upscale(img: np.ndarray, scale: int) -> np.ndarray:
    if scale == 1:
        return img
    return np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)


def encode_pgm(levels: np.ndarray, scale: int = 1) -> str:
    levels = _upscale(levels, scale)
    h, w = levels.shape
    body = "\n".join(" ".join(str(int(v)) for v in row) for row in levels)
    return f"P2\n{w} {h}\n{MAXVAL}\n{body}\n"


def encode_ppm(rgb: np.ndarray, scale: int = 1) -> str:
    rgb = _upscale(rgb, scale)
    h, w, _ = rgb.shape
    body = "\n".join(" ".join(f"{r} {g} {b}" for r, g, b in row) for row in rgb)
    return f"P3\n{w} {h}\n{MAXVAL}\n{body}\n"


def cluster_rgb(labels: np.ndarray) -> np.ndarray:
    palette = np.array(PALETTE, dtype=int)
    return palette[np.asarray(labels) % len(palette)]


def decode_netpbm(text: str) -> tuple[str, np.ndarray]:
    """Parse a plain P2/P3 image (no comments). Returns (magic, pixels)."""
    tokens = text.split()
    magic = tokens[0]
    w, h, _maxval = (int(t) for t in tokens[1:4])
    data = np.array([int(t) for t in tokens[4:]], dtype=int)
    if magic == "P2":
        return magic, data.reshape(h, w)
    if magic == "P3":
        return magic, data.reshape(h, w, 3)
    raise ValueError(f"unsupported netpbm type {magic!r}")


def write_planes(weights: np.ndarray, width: int, height: int, feature_names, labels, out_dir, scale: int = 1) -> list[Path]:
    """Write one graymap per feature plus ``clusters.ppm``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, name in enumerate(feature_names):
        plane = weights[:, j].reshape(height, width)
        path = out / f"plane_{j:02d}_{name}.pgm"
        path.write_text(encode_pgm(gray_levels(plane), scale), encoding="ascii")
        paths.append(path)
    path = out / "clusters.ppm"
    path.write_text(encode_ppm(cluster_rgb(np.asarray(labels).reshape(height, width)), scale), encoding="ascii")
    paths.append(path)
    return paths
