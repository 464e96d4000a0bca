"""End-to-end pass: control ticks, wire commands through the emulator, deposition."""

import math
from dataclasses import dataclass
from typing import List

from .control import FrozenClock, Frame, TickResult, classify_canopy, pipeline_tick
from .deposition import PassResult, run_pass
from .detector import OracleDetector


@dataclass
class SimulationResult:
    ticks: List[TickResult]
    timeline: list  # (time_ms, bytes)
    deposition: PassResult
    duration_ms: float


def make_detector(cfg):
    n = cfg.noise
    return OracleDetector(n.fn_rate, n.fp_rate, n.area_jitter, n.seed, cfg.conf_threshold).fit()


def frames(cfg):
    duration_ms = cfg.resolved_pass_length() / cfg.deposition.robot_speed * 1000.0
    interval = cfg.control.frame_interval
    n = int(math.ceil(duration_ms / interval - 1e-9))
    speed = cfg.deposition.robot_speed
    return [Frame(k, k * interval, speed * k * interval / 1000.0) for k in range(n)], duration_ms


def simulate(cfg, clock=None, jobs=1, detector=None):
    """Run one pass of ``cfg``; ``clock=None`` records zero latency for reproducible logs."""
    clock = clock or FrozenClock()
    detector = detector or make_detector(cfg)
    frame_list, duration_ms = frames(cfg)
    ticks = [pipeline_tick(f, cfg.scene, cfg.control, detector, clock) for f in frame_list]
    timeline = [(t.frame.time_ms, t.wire) for t in ticks]
    result = run_pass(cfg.scene, timeline, cfg.deposition, duration_ms,
                      cfg.control.pwm_period, jobs=jobs)
    return SimulationResult(ticks, timeline, result, duration_ms)


def paper_classes(cfg):
    """True canopy class of the plant each paper sits under (None if unassigned)."""
    plants = {p.id: p for p in cfg.scene.plants}
    out = {}
    for w in cfg.scene.papers:
        plant = plants.get(w.plant_id)
        out[w.id] = classify_canopy(plant.canopy_area, cfg.control) if plant else None
    return out


__all__ = ["SimulationResult", "simulate", "paper_classes", "make_detector", "frames"]
