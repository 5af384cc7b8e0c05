import numpy as np
import pytest

from trollmap.features import FEATURE_NAMES
from trollmap.planes import PALETTE, cluster_rgb, decode_netpbm, encode_pgm, encode_ppm, gray_levels, write_planes


def test_gray_levels_map_low_to_white():
    plane = np.array([[0.0, 0.5], [1.0, 0.25]])
    assert gray_levels(plane).tolist() == [[255, 128], [0, 191]]


def test_constant_plane_is_white():
    assert np.all(gray_levels(np.full((3, 4), 0.7)) == 255)


def test_pgm_layout_and_scale():
    text = encode_pgm(np.array([[0, 255]]), scale=2)
    assert text == "P2\n4 2\n255\n0 0 255 255\n0 0 255 255\n"
    magic, px = decode_netpbm(text)
    assert magic == "P2" and px.shape == (2, 4)


def test_ppm_round_trip():
    labels = np.arange(6).reshape(2, 3)
    rgb = cluster_rgb(labels)
    magic, px = decode_netpbm(encode_ppm(rgb))
    assert magic == "P3"
    assert np.array_equal(px, rgb)
    assert tuple(px[0, 0]) == PALETTE[0]
    assert len(set(PALETTE)) == len(PALETTE) == 15


def test_decode_rejects_other_formats():
    with pytest.raises(ValueError):
        decode_netpbm("P5\n1 1\n255\n0\n")


def test_write_planes(tmp_path):
    rng = np.random.default_rng(0)
    w = rng.random((12, 3))
    w[:, 2] = 0.4
    paths = write_planes(w, 4, 3, ("M", "L", "f_e2"), np.arange(12) % 2, tmp_path, scale=2)
    assert [p.name for p in paths] == ["plane_00_M.pgm", "plane_01_L.pgm", "plane_02_f_e2.pgm", "clusters.ppm"]
    _, px = decode_netpbm(paths[0].read_text())
    assert px.shape == (6, 8)
    # node (row 1, col 2) lands in pixel block rows 2-3, cols 4-5
    assert np.all(px[2:4, 4:6] == gray_levels(w[:, 0].reshape(3, 4))[1, 2])
    assert np.all(decode_netpbm(paths[2].read_text())[1] == 255)


def test_planted_thread_planes(planted_run):
    planes = planted_run["out"] / "planes"
    files = sorted(p.name for p in planes.iterdir())
    assert len(files) == 13
    assert files[-1] == "plane_11_f_quest.pgm" and files[0] == "clusters.ppm"
    images = {}
    for name in files:
        magic, px = decode_netpbm((planes / name).read_text())
        assert px.shape[:2] == (10, 10)
        images[name] = px
    assert len(FEATURE_NAMES) + 1 == len(images)
    # the letter э never occurs, so its plane carries no information
    assert np.all(images["plane_07_f_e2.pgm"] == 255)

    # the darkest nodes of the message-count plane belong to a flagged cluster
    m_plane = images["plane_00_M.pgm"].ravel()
    colours = images["clusters.ppm"].reshape(-1, 3)
    flagged_ids = [c["cluster_id"] for c in planted_run["report"]["clusters"] if c["troll_cluster"]]
    assert flagged_ids
    flagged = {PALETTE[c] for c in flagged_ids}
    darkest = np.flatnonzero(m_plane == m_plane.min())
    assert all(tuple(colours[i]) in flagged for i in darkest)
