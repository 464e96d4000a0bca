"""Canopy-size classification and the per-frame nozzle control tick."""

import csv
import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import ConfigError, check_areas, check_positive
from .detector import mask_area_physical
from .protocol import WireCommand, encode
from .scene import sector_for_pixel


class CanopyClass(enum.IntEnum):
    SMALL = 1
    MEDIUM = 2
    LARGE = 3


@dataclass(frozen=True)
class ControlConfig:
    t1: float = 0.01  # m², small/medium boundary
    t2: float = 0.03  # m², medium/large boundary
    duty_levels: Tuple[int, int, int] = (85, 170, 255)
    pwm_period: float = 100.0  # ms
    min_pulse: float = 20.0  # ms
    latency_budget: float = 250.0  # ms
    frame_interval: float = 100.0  # ms between camera frames

    def __post_init__(self):
        object.__setattr__(self, "duty_levels", tuple(self.duty_levels))
        check_positive(self.t1, "control.t1")
        check_positive(self.t2, "control.t2")
        if not self.t1 < self.t2:
            raise ConfigError(f"t1 ({self.t1}) must be < t2 ({self.t2})", field="control.t1")
        d = self.duty_levels
        if len(d) != 3 or not all(isinstance(v, int) for v in d) or not 0 < d[0] < d[1] < d[2] <= 255:
            raise ConfigError("need three integers with 0 < PWM1 < PWM2 < PWM3 <= 255",
                              field="control.duty_levels")
        check_positive(self.pwm_period, "control.pwm_period")
        check_positive(self.min_pulse, "control.min_pulse", allow_zero=True)
        if self.min_pulse > self.pwm_period:
            raise ConfigError("min_pulse must not exceed pwm_period", field="control.min_pulse")
        check_positive(self.latency_budget, "control.latency_budget", allow_zero=True)
        check_positive(self.frame_interval, "control.frame_interval")

    def duty_for(self, canopy_class):
        return self.duty_levels[int(canopy_class) - 1]


def classify_canopy(area, cfg):
    if area < 0:
        raise ValueError(f"negative canopy area {area}")
    if area < cfg.t1:
        return CanopyClass.SMALL
    if area < cfg.t2:
        return CanopyClass.MEDIUM
    return CanopyClass.LARGE


class CanopyClassifier(ClassifierMixin, BaseEstimator):
    """Threshold classifier from canopy area (m²) to SMALL/MEDIUM/LARGE.

    There is nothing to learn; ``fit`` only validates the thresholds so the
    classifier can sit in a pipeline or be scored against labelled areas.
    """

    def __init__(self, t1=0.01, t2=0.03):
        self.t1 = t1
        self.t2 = t2

    def fit(self, X, y=None):
        ControlConfig(t1=self.t1, t2=self.t2)
        self.classes_ = np.array([c.value for c in CanopyClass])
        self.thresholds_ = np.array([self.t1, self.t2])
        return self

    def predict(self, X):
        if not hasattr(self, "thresholds_"):
            self.fit(X)
        areas = check_areas(X)
        return np.searchsorted(self.thresholds_, areas, side="right") + 1


@dataclass(frozen=True)
class NozzleDecision:
    nozzle: int
    duty: int = 0  # 0 means OFF
    canopy_class: Optional[CanopyClass] = None
    sources: Tuple[str, ...] = ()
    clamped: bool = False

    @property
    def action(self):
        return "ON" if self.duty > 0 else "OFF"

    def command(self):
        return WireCommand.on(self.nozzle, self.duty) if self.duty > 0 else WireCommand.off(self.nozzle)


def decide_frame(detections, scene, cfg):
    """One decision per nozzle from ``{camera_id: [Detection, ...]}``.

    Each detection goes to the nozzle whose image sector holds its box centre;
    a nozzle takes the largest canopy class assigned to it.
    """
    cameras = {cam.id: cam for cam in scene.cameras}
    best = {}
    sources = {}
    for cam_id, dets in sorted(detections.items()):
        cam = cameras[cam_id]
        for k, d in enumerate(dets):
            cx = min(max(d.center[0], 0), cam.image_width - 1)
            nozzle = sector_for_pixel(cam, cx)
            cls = classify_canopy(mask_area_physical(d, cam).m2, cfg)
            sources.setdefault(nozzle, []).append(f"c{cam_id}:{k}")
            if cls > best.get(nozzle, 0):
                best[nozzle] = cls
    out = []
    for n in scene.boom.nozzle_ids:
        if n in best:
            out.append(NozzleDecision(n, cfg.duty_for(best[n]), best[n], tuple(sources[n])))
        else:
            out.append(NozzleDecision(n))
    return out


def min_pulse_duty(cfg):
    return math.ceil(255 * cfg.min_pulse / cfg.pwm_period - 1e-9)


def enforce_min_pulse(decision, cfg):
    """Raise a nonzero duty whose on-time would be shorter than the valve's minimum pulse."""
    if decision.duty > 0 and decision.duty * cfg.pwm_period / 255 < cfg.min_pulse:
        return replace(decision, duty=min_pulse_duty(cfg), clamped=True)
    return decision


@dataclass(frozen=True)
class Frame:
    index: int
    time_ms: float
    boom_x: float  # m


class DetectorError(RuntimeError):
    def __init__(self, frame_index, cause):
        self.frame_index = frame_index
        super().__init__(f"detector failed on frame {frame_index}: {cause}")


@dataclass
class TickResult:
    frame: Frame
    decisions: List[NozzleDecision]
    wire: bytes
    latency_ms: float
    over_budget: bool
    detections: dict = field(default_factory=dict, repr=False)


class FrozenClock:
    """Clock that never advances; makes latency records reproducible."""

    def __init__(self, value=0.0):
        self.value = value

    def __call__(self):
        return self.value


def pipeline_tick(frame, scene, cfg, detector, clock=time.perf_counter):
    """Turn one frame into wire commands, timing the whole path with ``clock`` (seconds)."""
    start = clock()
    detections = {}
    for cam in scene.cameras:
        truth = scene.project(cam, frame.boom_x)
        try:
            detections[cam.id] = detector.predict(
                truth, (cam.image_width, cam.image_height), frame.index, cam.id)
        except Exception as exc:
            raise DetectorError(frame.index, exc) from exc
    decisions = [enforce_min_pulse(d, cfg) for d in decide_frame(detections, scene, cfg)]
    wire = b"".join(encode(d.command(), scene.boom.nozzle_count) for d in decisions)
    latency = (clock() - start) * 1000.0
    return TickResult(frame, decisions, wire, latency, latency > cfg.latency_budget, detections)


DECISION_LOG_FIELDS = ("tick", "nozzle", "action", "duty", "canopy_class", "latency_ms", "clamped_flag")


def write_decision_log(ticks, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECISION_LOG_FIELDS)
        for t in ticks:
            for d in t.decisions:
                w.writerow([t.frame.index, d.nozzle, d.action, d.duty,
                            d.canopy_class.name if d.canopy_class else "",
                            f"{t.latency_ms:.3f}", int(d.clamped)])
