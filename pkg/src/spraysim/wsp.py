"""Water-sensitive paper analysis, from stain segmentation to coverage statistics."""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.special import ndtr
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ConfigError, check_mask, check_positive, check_rgb

CROSS = ndimage.generate_binary_structure(2, 1)
EIGHT = np.ones((3, 3), dtype=bool)


def rgb_to_hsv(image):
    """Hue in degrees [0, 360), saturation and value in [0, 1]."""
    rgb = check_rgb(image).astype(float) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.select(
        [delta == 0, mx == r, mx == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        (r - g) / safe + 4.0,
    ) * 60.0
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return hue, sat, mx


def _gaussian_window_sigma(window):
    # sigma OpenCV derives for a Gaussian kernel of this size
    return 0.3 * ((window - 1) * 0.5 - 1) + 0.8


def segment_stains(image, hue_range=(180.0, 280.0), sat_min=0.25, window=51, offset=2.0,
                   morphology=True):
    """Binary stain mask of an RGB paper photograph.

    Blue-hued, saturated pixels are candidates. Candidates brighter than the
    Gaussian-weighted local mean of the value channel plus ``offset`` (on the
    0-255 scale) are dropped as pale paper. The mask is then opened and closed
    with a 3x3 cross.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    hue, sat, val = rgb_to_hsv(image)
    mask = (hue >= hue_range[0]) & (hue <= hue_range[1]) & (sat >= sat_min)
    if mask.any():
        v255 = val * 255.0
        sigma = _gaussian_window_sigma(window)
        local = ndimage.gaussian_filter(v255, sigma, mode="nearest",
                                        truncate=(window // 2) / sigma)
        mask &= v255 <= local + offset
    if morphology:
        padded = np.pad(mask, 2, mode="edge")
        padded = ndimage.binary_opening(padded, CROSS)
        padded = ndimage.binary_closing(padded, CROSS)
        mask = padded[2:-2, 2:-2]
    return mask


def coverage_percent(mask):
    """Stained share of the paper in percent."""
    mask = check_mask(mask)
    if mask.size == 0:
        raise ValueError("mask has zero area")
    return 100.0 * int(np.count_nonzero(mask)) / int(mask.size)


@dataclass(frozen=True)
class DropletRecord:
    id: int
    centroid_px: Tuple[float, float]  # (row, col)
    centroid_mm: Tuple[float, float]
    area_px: int
    area_um2: float

    @property
    def equivalent_diameter_um(self):
        return 2.0 * math.sqrt(self.area_um2 / math.pi)


def label_droplets(mask):
    """8-connected component labels of a binary mask."""
    return ndimage.label(check_mask(mask), structure=EIGHT)


def extract_droplets(mask, resolution_um, min_area_px=2):
    """Connected stains as droplet records; components under ``min_area_px`` are discarded."""
    if resolution_um is None:
        raise ConfigError("image resolution (µm/px) is required", field="resolution_um")
    check_positive(resolution_um, "resolution_um")
    labels, n = label_droplets(mask)
    if n == 0:
        return []
    flat = labels.ravel()
    rows, cols = np.indices(labels.shape)
    area = np.bincount(flat, minlength=n + 1)
    sum_r = np.bincount(flat, weights=rows.ravel(), minlength=n + 1)
    sum_c = np.bincount(flat, weights=cols.ravel(), minlength=n + 1)
    out = []
    px_um2 = resolution_um ** 2
    for lab in range(1, n + 1):
        a = int(area[lab])
        if a < min_area_px:
            continue
        r, c = sum_r[lab] / a, sum_c[lab] / a
        out.append(DropletRecord(
            len(out) + 1, (r, c),
            ((r + 0.5) * resolution_um / 1000, (c + 0.5) * resolution_um / 1000),
            a, a * px_um2))
    return out


@dataclass(frozen=True)
class DropletStats:
    n: int
    mean: float
    median: float
    std: float
    p33: float
    p66: float
    small: int
    medium: int
    large: int

    @property
    def bins(self):
        return (self.small, self.medium, self.large)


def nearest_rank(sorted_values, percent):
    """``ceil(percent/100 * N)``-th order statistic (1-based), integer arithmetic on the rank."""
    n = len(sorted_values)
    rank = max(-(-percent * n // 100), 1)
    return sorted_values[rank - 1]


def droplet_stats(values):
    """Mean, median, population std, nearest-rank P33/P66 and bin counts.

    ``values`` are droplet areas, or DropletRecords (their µm² areas are used).
    """
    vals = [v.area_um2 if isinstance(v, DropletRecord) else float(v) for v in values]
    if not vals:
        nan = float("nan")
        return DropletStats(0, nan, nan, nan, nan, nan, 0, 0, 0)
    arr = np.sort(np.asarray(vals, dtype=float))
    mu = float(arr.mean())
    sigma = float(np.sqrt(np.mean((arr - mu) ** 2)))
    p33 = float(nearest_rank(arr, 33))
    p66 = float(nearest_rank(arr, 66))
    small = int(np.count_nonzero(arr < p33))
    large = int(np.count_nonzero(arr >= p66))
    return DropletStats(len(arr), mu, float(np.median(arr)), sigma, p33, p66,
                        small, len(arr) - small - large, large)


@dataclass
class KdeGrid:
    density: np.ndarray  # droplets per mm², rows x cols
    bandwidth_mm: Tuple[float, float]  # (row axis, col axis)
    cell_mm: Tuple[float, float]

    @property
    def integral(self):
        return float(self.density.sum() * self.cell_mm[0] * self.cell_mm[1])

    def to_gray(self):
        peak = self.density.max()
        if peak <= 0:
            return np.zeros(self.density.shape, dtype=np.uint8)
        return np.round(self.density / peak * 255).astype(np.uint8)


def silverman_bandwidth(points, fallback=1.0):
    """Per-axis Silverman bandwidth for 2-D data: ``std * n**(-1/6)``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return (fallback, fallback)
    h = pts.std(axis=0, ddof=1) * len(pts) ** (-1 / 6)
    return tuple(float(v) if v > 0 else fallback for v in h)


def kde_heatmap(centroids_mm, extent_mm, cells=(50, 150), bandwidth=None):
    """Gaussian KDE of droplet centroids, integrated over each grid cell.

    Parameters
    ----------
    centroids_mm : (N, 2) array of (row, col) positions in mm
    extent_mm : (height, width) of the paper in mm
    cells : (rows, cols) of the output grid
    bandwidth : None, scalar or (row, col) pair in mm; None uses Silverman per axis

    Density is in droplets/mm², so ``density.sum() * cell_area`` is N less
    whatever kernel mass falls off the paper.
    """
    pts = np.asarray(centroids_mm, dtype=float).reshape(-1, 2)
    rows, cols = cells
    ch, cw = extent_mm[0] / rows, extent_mm[1] / cols
    if bandwidth is None:
        bw = silverman_bandwidth(pts)
    elif np.ndim(bandwidth) == 0:
        bw = (float(bandwidth), float(bandwidth))
    else:
        bw = tuple(float(b) for b in bandwidth)
    if len(pts) == 0:
        return KdeGrid(np.zeros((rows, cols)), bw, (ch, cw))
    edges_r = np.linspace(0, extent_mm[0], rows + 1)
    edges_c = np.linspace(0, extent_mm[1], cols + 1)
    # separable kernel: per-point cell masses along each axis
    cdf_r = ndtr((edges_r[None, :] - pts[:, :1]) / bw[0])
    cdf_c = ndtr((edges_c[None, :] - pts[:, 1:]) / bw[1])
    mass_r = np.diff(cdf_r, axis=1)
    mass_c = np.diff(cdf_c, axis=1)
    density = mass_r.T @ mass_c / (ch * cw)
    return KdeGrid(density, bw, (ch, cw))


@dataclass
class UniformityReport:
    coverage_percent: float
    cell_coverage: np.ndarray
    grid_cv: float
    center_coverage: float
    side_coverage: float
    drift_index: float
    drift_saturated: bool = False  # center unstained but sides stained; drift_index is inf
    kde: Optional[KdeGrid] = None


def _split_bounds(n, parts):
    if parts > n:
        raise ValueError(f"cannot split {n} pixels into {parts} cells")
    return [(int(a[0]), int(a[-1]) + 1) for a in np.array_split(np.arange(n), parts)]


def uniformity(mask, grid=(3, 9)):
    """Per-cell coverage CV and the side-to-centre drift index.

    The grid is ``(rows, cols)``; the centre region is the middle third of the
    longer image axis and the sides are the two outer thirds together.
    """
    mask = check_mask(mask)
    cells = np.array([[mask[r0:r1, c0:c1].mean() for c0, c1 in _split_bounds(mask.shape[1], grid[1])]
                      for r0, r1 in _split_bounds(mask.shape[0], grid[0])])
    mu = cells.mean()
    cv = float(cells.std() / mu) if mu > 0 else 0.0

    axis = 1 if mask.shape[1] >= mask.shape[0] else 0
    (a0, a1), (b0, b1), (c0, c1) = _split_bounds(mask.shape[axis], 3)
    along = np.moveaxis(mask, axis, 0)
    center = float(along[b0:b1].mean())
    sides = float((np.count_nonzero(along[a0:a1]) + np.count_nonzero(along[c0:c1]))
                  / ((a1 - a0 + c1 - c0) * along.shape[1]))
    saturated = False
    if center > 0:
        drift = sides / center
    elif sides > 0:
        drift, saturated = math.inf, True
    else:
        drift = 0.0
    return UniformityReport(coverage_percent(mask), cells, cv, center, sides, drift, saturated)


@dataclass
class WspReport:
    paper_id: str
    resolution_um: float
    shape: Tuple[int, int]
    coverage_percent: float
    droplets: List[DropletRecord]
    area_stats: DropletStats
    diameter_stats: DropletStats
    uniformity: UniformityReport
    mask: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self):
        u = self.uniformity

        def stats(s):
            def num(v):  # empty papers have undefined stats; JSON has no NaN
                return None if math.isnan(v) else v

            return {"n": s.n, "mean": num(s.mean), "median": num(s.median), "std": num(s.std),
                    "p33": num(s.p33), "p66": num(s.p66),
                    "bins": {"small": s.small, "medium": s.medium, "large": s.large}}

        return {
            "paper_id": self.paper_id,
            "resolution_um": self.resolution_um,
            "shape": list(self.shape),
            "coverage_percent": self.coverage_percent,
            "droplet_count": len(self.droplets),
            "area_um2": stats(self.area_stats),
            "equivalent_diameter_um": stats(self.diameter_stats),
            "uniformity": {
                "grid": list(u.cell_coverage.shape),
                "grid_cv": u.grid_cv,
                "center_coverage": u.center_coverage,
                "side_coverage": u.side_coverage,
                "drift_index": "inf" if u.drift_saturated else u.drift_index,
                "drift_saturated": u.drift_saturated,
                "kde_bandwidth_mm": list(u.kde.bandwidth_mm) if u.kde else None,
            },
        }


FEATURES = ("coverage_percent", "droplet_count", "mean_area_um2", "median_area_um2",
            "std_area_um2", "p33_area_um2", "p66_area_um2", "small", "medium", "large",
            "grid_cv", "drift_index")


class WspAnalyzer(TransformerMixin, BaseEstimator):
    """Turns paper images into droplet and coverage statistics.

    ``transform`` maps a sequence of images (2-D grey or RGB uint8) to one
    feature row per image, see :data:`FEATURES`. ``analyze`` returns the
    full report for a single image.

    Grey images are treated as pre-segmented: pixels darker than
    ``gray_threshold`` are stained. RGB images go through
    :func:`segment_stains`.
    """

    def __init__(self, resolution_um=42.3, hue_range=(180.0, 280.0), sat_min=0.25, window=51,
                 offset=2.0, morphology=True, min_area_px=2, grid=(3, 9), kde_cells=(50, 150),
                 bandwidth=None, gray_threshold=128):
        self.resolution_um = resolution_um
        self.hue_range = hue_range
        self.sat_min = sat_min
        self.window = window
        self.offset = offset
        self.morphology = morphology
        self.min_area_px = min_area_px
        self.grid = grid
        self.kde_cells = kde_cells
        self.bandwidth = bandwidth
        self.gray_threshold = gray_threshold

    def fit(self, X=None, y=None):
        if self.resolution_um is None:
            raise ConfigError("image resolution (µm/px) is required", field="resolution_um")
        check_positive(self.resolution_um, "resolution_um")
        self.n_features_out_ = len(FEATURES)
        return self

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURES, dtype=object)

    def segment(self, image):
        image = np.asarray(image)
        if image.ndim == 2:
            return image < self.gray_threshold
        return segment_stains(image, self.hue_range, self.sat_min, self.window, self.offset,
                              self.morphology)

    def analyze(self, image, paper_id=""):
        self.fit()
        mask = self.segment(image)
        droplets = extract_droplets(mask, self.resolution_um, self.min_area_px)
        u = uniformity(mask, self.grid)
        extent = (mask.shape[0] * self.resolution_um / 1000, mask.shape[1] * self.resolution_um / 1000)
        u.kde = kde_heatmap([d.centroid_mm for d in droplets], extent, self.kde_cells, self.bandwidth)
        return WspReport(
            paper_id, self.resolution_um, mask.shape, u.coverage_percent, droplets,
            droplet_stats(droplets),
            droplet_stats([d.equivalent_diameter_um for d in droplets]),
            u, mask)

    def transform(self, X):
        rows = []
        for image in X:
            r = self.analyze(image)
            s = r.area_stats
            rows.append([r.coverage_percent, s.n, s.mean, s.median, s.std, s.p33, s.p66,
                         s.small, s.medium, s.large, r.uniformity.grid_cv, r.uniformity.drift_index])
        return np.asarray(rows, dtype=float).reshape(-1, len(FEATURES))
