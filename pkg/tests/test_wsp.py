import math
from collections import deque

import numpy as np
import pytest

from spraysim._validation import ConfigError
from spraysim.deposition import BLUE, YELLOW, stamp_disks
from spraysim.wsp import (FEATURES, WspAnalyzer, coverage_percent, droplet_stats, extract_droplets,
                          kde_heatmap, nearest_rank, rgb_to_hsv, segment_stains, uniformity)


def _flood_fill_count(mask):
    """Independent 8-connected component count."""
    seen = np.zeros_like(mask)
    n = 0
    H, W = mask.shape
    for r0, c0 in zip(*np.nonzero(mask)):
        if seen[r0, c0]:
            continue
        n += 1
        q = deque([(r0, c0)])
        seen[r0, c0] = True
        while q:
            r, c = q.popleft()
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < H and 0 <= cc < W and mask[rr, cc] and not seen[rr, cc]:
                        seen[rr, cc] = True
                        q.append((rr, cc))
    return n


def _paper(shape, color):
    img = np.empty(shape + (3,), np.uint8)
    img[...] = color
    return img


def test_hsv_of_paper_colours():
    h, s, _ = rgb_to_hsv(_paper((1, 1), BLUE))
    assert 180 <= h[0, 0] <= 280 and s[0, 0] >= 0.25
    h, _, _ = rgb_to_hsv(_paper((1, 1), YELLOW))
    assert h[0, 0] == pytest.approx(60.0)


def test_yellow_paper_empty_mask():
    assert not segment_stains(_paper((60, 80), YELLOW)).any()


def test_blue_paper_full_mask():
    mask = segment_stains(_paper((60, 80), BLUE))
    assert coverage_percent(mask) == 100.0


def test_rendered_disks_recovered_within_two_percent():
    truth = np.zeros((200, 300), bool)
    rng = np.random.default_rng(2)
    stamp_disks(truth, rng.uniform(0, 200, 60), rng.uniform(0, 300, 60), rng.uniform(3, 8, 60))
    img = _paper(truth.shape, YELLOW)
    img[truth] = BLUE
    mask = segment_stains(img)
    assert abs(int(mask.sum()) - int(truth.sum())) <= 0.02 * truth.sum()


def test_coverage_arithmetic():
    m = np.zeros(5000, bool)
    m[:2000] = True
    assert coverage_percent(m.reshape(50, 100)) == 40.0
    assert coverage_percent(np.zeros((3, 3), bool)) == 0.0
    with pytest.raises(ValueError):
        coverage_percent(np.zeros((0, 3), bool))


def test_square_droplet():
    m = np.zeros((20, 20), bool)
    m[5:10, 8:13] = True
    (d,) = extract_droplets(m, 10.0)
    assert d.area_px == 25 and d.centroid_px == (7.0, 10.0)
    assert d.area_um2 == 2500.0


def test_disjoint_and_touching_disks():
    m = np.zeros((30, 30), bool)
    stamp_disks(m, [8, 22], [8, 22], [4, 4])
    assert len(extract_droplets(m, 1.0)) == 2 == _flood_fill_count(m)
    m = np.zeros((20, 20), bool)
    m[5:9, 5:9] = True
    m[9:13, 9:13] = True  # corners touch diagonally
    assert len(extract_droplets(m, 1.0)) == 1 == _flood_fill_count(m)


def test_labelling_matches_flood_fill_random():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = rng.random((30, 40)) < 0.3
        assert len(extract_droplets(m, 1.0, min_area_px=1)) == _flood_fill_count(m)


def test_min_area_filter_and_resolution_required():
    m = np.zeros((5, 5), bool)
    m[2, 2] = True
    assert extract_droplets(m, 1.0) == []
    with pytest.raises(ConfigError):
        extract_droplets(m, None)


def test_stats_small_sample():
    s = droplet_stats([1, 2, 3, 4, 5])
    assert (s.mean, s.median) == (3.0, 3.0)
    assert s.std == pytest.approx(math.sqrt(2), abs=1e-12)


def test_stats_nearest_rank_bins():
    s = droplet_stats(range(1, 10))
    assert (s.p33, s.p66) == (3.0, 6.0)
    assert s.bins == (2, 3, 4)
    assert nearest_rank([10, 20, 30], 0) == 10


def test_stats_empty():
    s = droplet_stats([])
    assert s.n == 0 and s.bins == (0, 0, 0)


def test_kde_single_droplet():
    g = kde_heatmap([(12.7, 38.1)], (25.4, 76.2), bandwidth=1.0)
    r, c = np.unravel_index(np.argmax(g.density), g.density.shape)
    assert (r, c) == (25, 75)
    assert g.integral == pytest.approx(1.0, rel=0.01)


def test_kde_two_peaks():
    g = kde_heatmap([(12.7, 10.0), (12.7, 60.0)], (25.4, 76.2), bandwidth=1.0)
    row = g.density[25]
    peaks = [i for i in range(1, len(row) - 1) if row[i] > row[i - 1] and row[i] >= row[i + 1]]
    assert len(peaks) == 2


def test_kde_uniform_is_flat():
    rng = np.random.default_rng(0)
    n, extent, cells = 10_000, (25.4, 76.2), (10, 30)
    pts = rng.uniform((0, 0), extent, (n, 2))
    g = kde_heatmap(pts, extent, cells, bandwidth=0.3)
    counts = g.density * g.cell_mm[0] * g.cell_mm[1]
    expected = n / (cells[0] * cells[1])
    inner = counts[1:-1, 1:-1]  # edge cells lose kernel mass off the paper
    assert np.all(np.abs(inner - expected) < 3 * math.sqrt(expected) + 0.05 * expected)


def test_kde_empty_is_zero():
    assert not kde_heatmap([], (10, 10), (4, 4)).density.any()


def test_uniformity_trivial_cases():
    full = uniformity(np.ones((30, 90), bool))
    assert full.grid_cv == 0.0 and full.drift_index == 1.0
    center = np.zeros((30, 90), bool)
    center[:, 30:60] = True
    assert uniformity(center).drift_index == 0.0
    sides = ~center
    u = uniformity(sides)
    assert u.drift_saturated and math.isinf(u.drift_index)
    assert uniformity(np.zeros((30, 90), bool)).drift_index == 0.0


def test_uniformity_checkerboard_by_hand():
    m = np.zeros((8, 8), bool)
    m[:, :4] = True  # left half stained
    u = uniformity(m, grid=(2, 2))
    # cells: 1, 0 per row -> mean 0.5, population std 0.5
    assert u.grid_cv == pytest.approx(1.0)
    m = np.zeros((8, 8), bool)
    m[:4, :2] = True
    m[4:, 4:] = True
    u = uniformity(m, grid=(2, 2))
    cells = np.array([0.5, 0.0, 0.0, 1.0])
    assert u.grid_cv == pytest.approx(cells.std() / cells.mean())


def test_analyzer_transform_shape():
    a = WspAnalyzer(resolution_um=42.3)
    gray = np.full((60, 180), 255, np.uint8)
    gray[10:20, 10:20] = 0
    X = a.fit().transform([gray, gray])
    assert X.shape == (2, len(FEATURES))
    assert X[0, 0] == pytest.approx(100 * 100 / (60 * 180))
    assert list(a.get_feature_names_out()) == list(FEATURES)


def test_analyzer_requires_resolution():
    with pytest.raises(ConfigError):
        WspAnalyzer(resolution_um=None).fit()
