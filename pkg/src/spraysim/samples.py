"""Deterministic sample data: a stained reference strip and a detection fixture."""

import numpy as np

from .deposition import BLUE, YELLOW, stamp_disks
from .detector import Detection, format_detections

STRIP_SHAPE = (600, 1801)  # 25.4 x 76.2 mm at 42.3 µm/px
STRIP_RESOLUTION_UM = 42.3
STRIP_TARGET_COVERAGE = 24.22


def reference_strip_mask(seed=0, target=STRIP_TARGET_COVERAGE, shape=STRIP_SHAPE):
    """Binary stain mask grown disk by disk until ``target`` percent is stained.

    Radii are log-normal (median 3 px) so the strip carries a spread of
    stain sizes; the last disk is shrunk so coverage lands on the target.
    """
    rng = np.random.default_rng([seed, 7])
    mask = np.zeros(shape, dtype=bool)
    goal = int(round(target / 100 * mask.size))
    while True:
        n_left = goal - int(mask.sum())
        if n_left <= 0:
            break
        k = max(1, min(200, n_left // 60))
        r = rng.uniform(0, shape[0], k)
        c = rng.uniform(0, shape[1], k)
        rad = np.clip(3.0 * np.exp(rng.normal(0, 0.45, k)), 1.6, 12.0)
        trial = mask.copy()
        stamp_disks(trial, r, c, rad)
        if trial.sum() <= goal:
            mask = trial
            continue
        for i in range(k):  # overshooting batch: add one disk at a time
            single = mask.copy()
            stamp_disks(single, r[i:i + 1], c[i:i + 1], rad[i:i + 1])
            if single.sum() <= goal:
                mask = single
        if mask.sum() >= goal - 4:  # too close to fit another disk
            break
    return mask


def render_strip(mask, seed=0):
    """RGB photograph-like rendering: noisy yellow paper, darker blue stains."""
    rng = np.random.default_rng([seed, 8])
    img = np.empty(mask.shape + (3,), dtype=float)
    img[...] = YELLOW
    img[mask] = BLUE
    img += rng.normal(0, 4.0, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def reference_strip(seed=0):
    """``(rgb, resolution_um)`` of the bundled reference strip."""
    return render_strip(reference_strip_mask(seed), seed), STRIP_RESOLUTION_UM


def eval_fixture():
    """Prediction and truth text reproducing 26 TP, 3 FP and 1 FN at IoU 0.5.

    27 frames carry one plant each; the last one is missed. Three extra
    predictions sit away from any plant.
    """
    truths, preds = {}, {}
    rng = np.random.default_rng(11)
    confs = iter(np.round(np.linspace(0.97, 0.52, 29), 4))
    for f in range(27):
        x0, y0 = 40 + 15 * f, 60 + 7 * f
        w, h = 80 + 3 * f, 70 + 2 * f
        truths[f] = [Detection((x0, y0, x0 + w, y0 + h))]
        if f == 26:
            preds[f] = []
            continue
        dx, dy = (int(v) for v in rng.integers(-6, 7, 2))
        preds[f] = [Detection((x0 + dx, y0 + dy, x0 + w + dx, y0 + h + dy), float(next(confs)))]
    for f in (3, 11, 19):
        preds[f].append(Detection((500, 380, 560, 440), float(next(confs))))
    return format_detections(preds), format_detections(truths)
