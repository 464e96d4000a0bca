"""Detection interface and a seeded, noise-injecting oracle detector.

The oracle stands in for a trained detection/segmentation network: it takes
the ground-truth plant projections of a frame, drops some (Bernoulli misses),
adds Poisson false positives, and scales mask areas by a log-normal factor.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import ConfigError, check_fraction, check_positive
from .scene import ground_sampling_distance

CLASS_NAMES = ("weed",)


@dataclass(frozen=True)
class Detection:
    """A predicted (or annotated) instance in camera pixel space.

    ``mask`` is aligned to the box: its top-left pixel is
    ``(floor(x_min), floor(y_min))``.
    """

    box: Tuple[float, float, float, float]
    confidence: float = 1.0
    class_id: int = 0
    mask: Optional[np.ndarray] = field(default=None, compare=False)
    source: Optional[str] = None

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.ndim != 2:
                raise ValueError("mask must be 2-D")
            ox, oy = math.floor(x0), math.floor(y0)
            if oy + mask.shape[0] > math.ceil(y1) or ox + mask.shape[1] > math.ceil(x1):
                raise ValueError("mask extends beyond its box")
            object.__setattr__(self, "mask", mask)

    @property
    def origin(self):
        return math.floor(self.box[0]), math.floor(self.box[1])

    @property
    def center(self):
        x0, y0, x1, y1 = self.box
        return (x0 + x1) / 2, (y0 + y1) / 2

    def same_as(self, other):
        """Value equality including the mask pixels."""
        if self.box != other.box or self.confidence != other.confidence or self.class_id != other.class_id:
            return False
        if (self.mask is None) != (other.mask is None):
            return False
        return self.mask is None or np.array_equal(self.mask, other.mask)


@dataclass(frozen=True)
class OracleNoise:
    fn_rate: float = 0.0
    fp_rate: float = 0.0  # expected spurious detections per frame
    area_jitter: float = 0.0  # sigma of the log-normal area factor
    seed: int = 0

    def __post_init__(self):
        check_fraction(self.fn_rate, "detector.fn_rate")
        check_positive(self.fp_rate, "detector.fp_rate", allow_zero=True)
        check_positive(self.area_jitter, "detector.area_jitter", allow_zero=True)
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be a 64-bit non-negative integer", field="seed")


def _rescale_mask(box, mask, scale, image_size):
    """Scale a box-aligned mask about its centroid by ``scale`` (linear), nearest neighbour."""
    W, H = image_size
    ox, oy = box[0], box[1]
    rr, cc = np.nonzero(mask)
    cx = ox + cc.mean() + 0.5
    cy = oy + rr.mean() + 0.5
    nx0 = max(math.floor(cx + (box[0] - cx) * scale), 0)
    ny0 = max(math.floor(cy + (box[1] - cy) * scale), 0)
    nx1 = min(math.ceil(cx + (box[2] - cx) * scale), W)
    ny1 = min(math.ceil(cy + (box[3] - cy) * scale), H)
    if nx0 >= nx1 or ny0 >= ny1:
        return None
    px = np.arange(nx0, nx1) + 0.5
    py = np.arange(ny0, ny1) + 0.5
    sx = np.floor(cx + (px - cx) / scale).astype(int) - ox
    sy = np.floor(cy + (py - cy) / scale).astype(int) - oy
    okx = (sx >= 0) & (sx < mask.shape[1])
    oky = (sy >= 0) & (sy < mask.shape[0])
    out = np.zeros((len(py), len(px)), dtype=bool)
    sub = mask[np.ix_(sy[oky], sx[okx])]
    out[np.ix_(oky, okx)] = sub
    if not out.any():
        return None
    r = np.flatnonzero(out.any(axis=1))
    c = np.flatnonzero(out.any(axis=0))
    out = out[r[0]:r[-1] + 1, c[0]:c[-1] + 1]
    return (nx0 + int(c[0]), ny0 + int(r[0]), nx0 + int(c[-1]) + 1, ny0 + int(r[-1]) + 1), out


def _ellipse_mask(w, h):
    yy, xx = np.mgrid[0:h, 0:w]
    return ((xx + 0.5 - w / 2) / (w / 2)) ** 2 + ((yy + 0.5 - h / 2) / (h / 2)) ** 2 <= 1.0


def detect(frame_truth, noise, image_size=(640, 480), frame_index=0, stream=0,
           conf_threshold=0.0):
    """Run the oracle on one frame.

    Output depends only on the inputs and ``(noise.seed, frame_index, stream)``;
    ``stream`` separates cameras sharing a frame index.
    """
    rng = np.random.default_rng([noise.seed, frame_index, stream])
    W, H = image_size
    out = []
    for truth in frame_truth:
        missed = rng.random() < noise.fn_rate
        conf = float(rng.uniform(0.75, 1.0))
        log_factor = rng.normal(0.0, 1.0) * noise.area_jitter
        if missed:
            continue
        box, mask = tuple(truth.box), truth.mask
        if noise.area_jitter > 0:
            scaled = _rescale_mask(box, mask, math.exp(log_factor / 2), image_size)
            if scaled is None:
                continue
            box, mask = scaled
        out.append(Detection(box, conf, 0, mask.copy(), source=truth.plant_id))

    for _ in range(rng.poisson(noise.fp_rate)):
        w = int(rng.integers(8, 41))
        h = int(rng.integers(8, 41))
        x0 = int(rng.integers(0, W - w + 1))
        y0 = int(rng.integers(0, H - h + 1))
        conf = float(rng.uniform(0.25, 0.85))
        out.append(Detection((x0, y0, x0 + w, y0 + h), conf, 0, _ellipse_mask(w, h), source=None))

    return [d for d in out if d.confidence >= conf_threshold]


class OracleDetector(BaseEstimator):
    """Estimator-style wrapper around :func:`detect`.

    Parameters
    ----------
    fn_rate : float
        Probability that a visible plant is missed.
    fp_rate : float
        Expected number of spurious detections per frame.
    area_jitter : float
        Sigma of the log-normal factor applied to each reported mask area.
    seed : int
        Base seed; per-frame streams derive from ``(seed, frame, camera)``.
    conf_threshold : float
        Detections below this confidence are dropped.
    """

    def __init__(self, fn_rate=0.0, fp_rate=0.0, area_jitter=0.0, seed=0, conf_threshold=0.5):
        self.fn_rate = fn_rate
        self.fp_rate = fp_rate
        self.area_jitter = area_jitter
        self.seed = seed
        self.conf_threshold = conf_threshold

    def fit(self, X=None, y=None):
        self.noise_ = OracleNoise(self.fn_rate, self.fp_rate, self.area_jitter, self.seed)
        check_fraction(self.conf_threshold, "detector.conf_threshold")
        return self

    def predict(self, frame_truth, image_size=(640, 480), frame_index=0, stream=0):
        if not hasattr(self, "noise_"):
            self.fit()
        return detect(frame_truth, self.noise_, image_size, frame_index, stream,
                      self.conf_threshold)


class CanopyArea(NamedTuple):
    m2: float
    from_box: bool  # True when no mask was available and the box area was used


def mask_area_physical(d, camera):
    """Physical canopy area of a detection, in m²."""
    gsd_h, gsd_v = ground_sampling_distance(camera)
    px_area = gsd_h * gsd_v * 1e-12
    if d.mask is None:
        x0, y0, x1, y1 = d.box
        return CanopyArea((x1 - x0) * (y1 - y0) * px_area, True)
    return CanopyArea(int(np.count_nonzero(d.mask)) * px_area, False)


# -- line format ----------------------------------------------------------------------
#
#   <frame> <class> <confidence> <x_min> <y_min> <x_max> <y_max> <mask>
#
# <mask> is "-" or "<rows>x<cols>:<r0>,<r1>,..." with run lengths over the
# row-major mask, alternating 0/1 and starting with a (possibly empty) 0 run.

def rle_encode(mask):
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return f"{mask.shape[0]}x{mask.shape[1]}:"
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return f"{mask.shape[0]}x{mask.shape[1]}:" + ",".join(map(str, runs))


def rle_decode(text):
    shape, _, body = text.partition(":")
    rows, cols = (int(v) for v in shape.split("x"))
    runs = [int(v) for v in body.split(",")] if body else []
    if sum(runs) != rows * cols:
        raise ValueError(f"run lengths sum to {sum(runs)}, expected {rows * cols}")
    values = np.arange(len(runs)) % 2 == 1
    return np.repeat(values, runs).reshape(rows, cols)


def _fmt_num(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def format_detections(frames):
    """Serialise ``{frame: [Detection, ...]}`` to the line format."""
    lines = []
    for frame in sorted(frames):
        for d in frames[frame]:
            mask = "-" if d.mask is None else rle_encode(d.mask)
            coords = " ".join(_fmt_num(v) for v in d.box)
            lines.append(f"{frame} {CLASS_NAMES[d.class_id]} {d.confidence!r} {coords} {mask}")
    return "".join(line + "\n" for line in lines)


def parse_detections(text):
    """Inverse of :func:`format_detections`; blank lines and ``#`` comments are skipped."""
    frames = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (7, 8):
            raise ValueError(f"line {lineno}: expected 7 or 8 fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            class_id = CLASS_NAMES.index(parts[1]) if parts[1] in CLASS_NAMES else int(parts[1])
            conf = float(parts[2])
            box = tuple(float(v) for v in parts[3:7])
            box = tuple(int(v) if v.is_integer() else v for v in box)
            mask = rle_decode(parts[7]) if len(parts) == 8 and parts[7] != "-" else None
            det = Detection(box, conf, class_id, mask)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        frames.setdefault(frame, []).append(det)
    return frames
