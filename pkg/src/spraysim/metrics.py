"""Detection evaluation: IoU, greedy matching, precision/recall/F1, AP and mAP."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def precision(self):
        return precision(self)

    def recall(self):
        return recall(self)

    def f1(self):
        return f1(precision(self), recall(self))


def precision(c):
    denom = c.tp + c.fp
    return c.tp / denom if denom else 0.0


def recall(c):
    denom = c.tp + c.fn
    return c.tp / denom if denom else 0.0


def f1(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _box_iou(a, b):
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def iou(a, b):
    """Intersection over union of two boxes ``(x0, y0, x1, y1)`` or two equal-shape masks."""
    a_arr, b_arr = np.asarray(a), np.asarray(b)
    if a_arr.ndim == 1 and b_arr.ndim == 1 and a_arr.size == 4 and b_arr.size == 4:
        return float(_box_iou(tuple(a_arr.tolist()), tuple(b_arr.tolist())))
    if a_arr.ndim == 2 and b_arr.ndim == 2:
        if a_arr.shape != b_arr.shape:
            raise ValueError(f"mask grids differ: {a_arr.shape} vs {b_arr.shape}")
        a_arr, b_arr = a_arr.astype(bool), b_arr.astype(bool)
        union = np.count_nonzero(a_arr | b_arr)
        return np.count_nonzero(a_arr & b_arr) / union if union else 0.0
    raise ValueError("iou expects two boxes or two 2-D masks")


def detection_iou(a, b, kind="box"):
    """IoU of two detections, pasting masks onto a shared grid when ``kind == 'mask'``."""
    if kind == "box":
        return _box_iou(a.box, b.box)
    if kind != "mask":
        raise ValueError(f"unknown iou kind {kind!r}")
    if a.mask is None or b.mask is None:
        raise ValueError("mask iou requires both detections to carry masks")
    (ax, ay), (bx, by) = a.origin, b.origin
    x0, y0 = min(ax, bx), min(ay, by)
    x1 = max(ax + a.mask.shape[1], bx + b.mask.shape[1])
    y1 = max(ay + a.mask.shape[0], by + b.mask.shape[0])
    ga = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    gb = np.zeros_like(ga)
    ga[ay - y0:ay - y0 + a.mask.shape[0], ax - x0:ax - x0 + a.mask.shape[1]] = a.mask
    gb[by - y0:by - y0 + b.mask.shape[0], bx - x0:bx - x0 + b.mask.shape[1]] = b.mask
    return iou(ga, gb)


def confidence_order(preds):
    """Indices of ``preds`` by descending confidence; ties keep input order."""
    return sorted(range(len(preds)), key=lambda i: -preds[i].confidence)


@dataclass(frozen=True)
class Match:
    pred: int
    truth: Optional[int]
    iou: float


def match_and_count(preds, truths, iou_threshold=0.5, kind="box"):
    """Greedy matching of one image's predictions against its annotations.

    Predictions are visited in descending confidence; each claims the still
    unmatched annotation of the same class with the highest IoU at or above
    ``iou_threshold``.

    Returns
    -------
    counts : ConfusionCounts
    matches : list of Match
        One entry per prediction, in visiting order.
    """
    claimed = [False] * len(truths)
    matches = []
    for i in confidence_order(preds):
        p = preds[i]
        best, best_iou = None, iou_threshold
        for j, t in enumerate(truths):
            if claimed[j] or t.class_id != p.class_id:
                continue
            v = detection_iou(p, t, kind)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = j, v
        if best is not None:
            claimed[best] = True
            matches.append(Match(i, best, best_iou))
        else:
            matches.append(Match(i, None, 0.0))
    tp = sum(m.truth is not None for m in matches)
    counts = ConfusionCounts(tp, len(preds) - tp, len(truths) - tp)
    return counts, matches


def pr_curve(confidences, hits, n_truth):
    """``(recall, precision)`` after each prediction, swept by descending confidence."""
    order = sorted(range(len(confidences)), key=lambda i: -confidences[i])
    hits = np.asarray(hits, dtype=bool)[order] if order else np.zeros(0, dtype=bool)
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    rec = tp / n_truth if n_truth else np.zeros_like(tp, dtype=float)
    prec = tp / np.maximum(tp + fp, 1)
    return list(zip(rec.tolist(), prec.tolist()))


def average_precision(pr_points):
    """All-point interpolated area under the monotone precision envelope."""
    if not pr_points:
        return 0.0
    rec = np.concatenate(([0.0], [r for r, _ in pr_points], [1.0]))
    prec = np.concatenate(([0.0], [p for _, p in pr_points], [0.0]))
    prec = np.maximum.accumulate(prec[::-1])[::-1]
    steps = np.flatnonzero(rec[1:] != rec[:-1])
    return float(np.sum((rec[steps + 1] - rec[steps]) * prec[steps + 1]))


def mean_ap(aps):
    aps = list(aps)
    return float(np.mean(aps)) if aps else 0.0


@dataclass
class ClassReport:
    class_id: int
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    ap: float
    pr_curve: List[Tuple[float, float]] = field(default_factory=list)


@dataclass
class EvalReport:
    classes: Dict[int, ClassReport]
    map: float
    iou_threshold: float
    counts: ConfusionCounts

    def to_dict(self):
        return {
            "iou_threshold": self.iou_threshold,
            "map": self.map,
            "counts": vars(self.counts),
            "classes": {
                str(c): {"tp": r.counts.tp, "fp": r.counts.fp, "fn": r.counts.fn,
                         "precision": r.precision, "recall": r.recall, "f1": r.f1, "ap": r.ap}
                for c, r in sorted(self.classes.items())
            },
        }


def evaluate(pred_frames, truth_frames, iou_threshold=0.5, kind="box", conf_threshold=0.0):
    """Evaluate ``{frame: [Detection]}`` predictions against annotations.

    Confusion counts use predictions at or above ``conf_threshold``; AP uses all
    predictions. Matching is per frame; the PR sweep pools frames.
    """
    frames = sorted(set(pred_frames) | set(truth_frames))
    class_ids = sorted({d.class_id for ds in pred_frames.values() for d in ds}
                       | {d.class_id for ds in truth_frames.values() for d in ds})
    classes = {}
    total = ConfusionCounts()
    for c in class_ids:
        confs, hits, n_truth = [], [], 0
        counts = ConfusionCounts()
        for f in frames:
            preds = [d for d in pred_frames.get(f, []) if d.class_id == c]
            truths = [d for d in truth_frames.get(f, []) if d.class_id == c]
            n_truth += len(truths)
            _, matches = match_and_count(preds, truths, iou_threshold, kind)
            for m in matches:
                confs.append(preds[m.pred].confidence)
                hits.append(m.truth is not None)
            kept = [d for d in preds if d.confidence >= conf_threshold]
            counts = counts + match_and_count(kept, truths, iou_threshold, kind)[0]
        curve = pr_curve(confs, hits, n_truth)
        ap = average_precision(curve) if n_truth else 0.0
        p, r = precision(counts), recall(counts)
        classes[c] = ClassReport(c, counts, p, r, f1(p, r), ap, curve)
        total = total + counts
    return EvalReport(classes, mean_ap(r.ap for r in classes.values()), iou_threshold, total)
