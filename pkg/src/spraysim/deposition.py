"""Stochastic droplet deposition from timed valve states onto virtual water-sensitive papers."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ._validation import ConfigError, check_positive
from .protocol import McuEmulator
from .scene import spray_band_width

YELLOW = (230, 230, 60)
BLUE = (30, 60, 160)


@dataclass(frozen=True)
class DepositionConfig:
    robot_speed: float = 0.5  # m/s
    droplet_median_um: float = 150.0
    droplet_gsd: float = 1.6  # geometric standard deviation of droplet diameter
    spread_factor: float = 2.1  # stain diameter / droplet diameter
    fan_depth: float = 0.10  # m, along-travel thickness of the spray sheet at the ground
    step_ms: float = 5.0
    seed: int = 0

    def __post_init__(self):
        check_positive(self.robot_speed, "deposition.robot_speed")
        check_positive(self.droplet_median_um, "deposition.droplet_median_um")
        if not self.droplet_gsd > 1:
            raise ConfigError("must be > 1", field="deposition.droplet_gsd")
        if not self.spread_factor >= 1:
            raise ConfigError("must be >= 1", field="deposition.spread_factor")
        check_positive(self.fan_depth, "deposition.fan_depth", allow_zero=True)
        check_positive(self.step_ms, "deposition.step_ms")

    @property
    def mean_droplet_volume(self):
        """E[pi d^3 / 6] for the log-normal diameter distribution, in m³."""
        s = math.log(self.droplet_gsd)
        d50 = self.droplet_median_um * 1e-6
        return math.pi / 6 * d50 ** 3 * math.exp(4.5 * s * s)

    def sample_diameters_um(self, rng, n):
        return self.droplet_median_um * np.exp(rng.normal(0.0, math.log(self.droplet_gsd), n))


def flow_ml_per_s(boom):
    return boom.nozzle_flow * 1000.0 / 60.0


def emitted_volume(duty, duration, boom):
    """Liquid volume (mL) a nozzle releases at ``duty``/255 over ``duration`` seconds."""
    if not 0 <= duty <= 255:
        raise ValueError(f"duty {duty} outside 0..255")
    if duration < 0:
        raise ValueError("duration must be >= 0")
    return flow_ml_per_s(boom) * (duty / 255) * duration


def emission_rate(boom, cfg):
    """Droplets per second from a fully open nozzle."""
    return boom.nozzle_flow / 60_000.0 / cfg.mean_droplet_volume


def sample_emission(duty, duration, boom, cfg, rng):
    """Diameters (µm) of every droplet one nozzle emits at ``duty`` over ``duration`` s."""
    n = rng.poisson(emission_rate(boom, cfg) * duty / 255 * duration)
    return cfg.sample_diameters_um(rng, n)


@dataclass
class WspRaster:
    """Binary stain raster; ``stained[r, c]`` is True where the paper turned blue.

    Rows run against the direction of travel, columns along the boom.
    """

    stained: np.ndarray
    resolution_um: float
    paper_id: str = ""

    @classmethod
    def blank(cls, paper):
        return cls(np.zeros(paper.shape, dtype=bool), paper.resolution_um, paper.id)

    def to_gray(self):
        """8-bit grey image: stained 0, unstained 255."""
        return np.where(self.stained, 0, 255).astype(np.uint8)

    def to_rgb(self):
        out = np.empty(self.stained.shape + (3,), dtype=np.uint8)
        out[...] = YELLOW
        out[self.stained] = BLUE
        return out


def stamp_disks(raster, rows, cols, radii):
    """Set every pixel whose centre lies within ``radii`` of ``(rows, cols)``.

    Coordinates are continuous, in pixel units, with pixel ``(r, c)`` centred
    at ``(r + 0.5, c + 0.5)``. Returns the number of disks stamped.
    """
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    radii = np.asarray(radii, dtype=float)
    H, W = raster.shape
    reach = np.ceil(radii).astype(int) + 1
    for k in np.unique(reach):
        sel = reach == k
        r, c, rad = rows[sel], cols[sel], radii[sel]
        off = np.arange(-k, k + 1)
        pr = np.floor(r).astype(int)[:, None, None] + off[None, :, None]
        pc = np.floor(c).astype(int)[:, None, None] + off[None, None, :]
        d2 = (pr + 0.5 - r[:, None, None]) ** 2 + (pc + 0.5 - c[:, None, None]) ** 2
        hit = (d2 <= (rad ** 2)[:, None, None]) & (pr >= 0) & (pr < H) & (pc >= 0) & (pc < W)
        pr, pc = np.broadcast_arrays(pr, pc)
        raster[pr[hit], pc[hit]] = True
    return len(rows)


@dataclass
class PassResult:
    rasters: Dict[str, WspRaster]
    on_time_ms: List[float]  # per nozzle, integrated PWM on-time
    open_steps: np.ndarray  # (k, 2) array of (step index, nozzle) where the valve was open
    droplets_on_paper: Dict[str, int] = field(default_factory=dict)


def valve_schedule(timeline, nozzle_count, pwm_period, duration_ms, step_ms):
    """Replay wire bytes through the emulator and sample valve states every step.

    ``timeline`` is a time-ordered sequence of ``(time_ms, bytes)``; bytes are
    delivered before the valve state at that instant is sampled.
    """
    mcu = McuEmulator(nozzle_count, pwm_period)
    n_steps = int(math.ceil(duration_ms / step_ms - 1e-9))
    open_steps = []
    timeline = list(timeline)
    j = 0
    for i in range(n_steps):
        t = i * step_ms
        while j < len(timeline) and timeline[j][0] <= t:
            mcu.feed(timeline[j][1])
            j += 1
        for n, is_open in enumerate(mcu.step(t)):
            if is_open:
                open_steps.append((i, n + 1))
    mcu.step(n_steps * step_ms)
    return np.asarray(open_steps, dtype=int).reshape(-1, 2), list(mcu.on_time_ms)


def _deposit_on_paper(paper, paper_index, open_steps, scene, cfg, rate, band):
    rng = np.random.default_rng([cfg.seed, 1, paper_index])
    raster = WspRaster.blank(paper)
    if len(open_steps) == 0:
        return raster, 0
    res_m = paper.resolution_um * 1e-6
    # droplets landing just off the paper can still stain its edge
    margin = cfg.spread_factor * cfg.droplet_median_um * 1e-6 * cfg.droplet_gsd ** 4 / 2
    px0, py0, px1, py1 = paper.bounds
    px0, py0, px1, py1 = px0 - margin, py0 - margin, px1 + margin, py1 + margin

    dt = cfg.step_ms / 1000.0
    sweep = cfg.robot_speed * dt
    step_idx, nozzles = open_steps[:, 0], open_steps[:, 1]
    sx0 = step_idx * sweep - cfg.fan_depth / 2
    sx1 = step_idx * sweep + sweep + cfg.fan_depth / 2
    reach = sx1 - sx0
    ny = np.array([scene.boom.nozzle_y(int(n)) for n in nozzles])
    by0, by1 = ny - band / 2, ny + band / 2

    ox0, ox1 = np.maximum(sx0, px0), np.minimum(sx1, px1)
    oy0, oy1 = np.maximum(by0, py0), np.minimum(by1, py1)
    keep = (ox1 > ox0) & (oy1 > oy0)
    if not keep.any():
        return raster, 0
    ox0, ox1, oy0, oy1 = ox0[keep], ox1[keep], oy0[keep], oy1[keep]
    # uniform landing over the swept sheet: thin the step's Poisson count to the overlap
    lam = rate * dt * ((ox1 - ox0) / reach[keep]) * ((oy1 - oy0) / band)
    counts = rng.poisson(lam)
    total = int(counts.sum())
    if total == 0:
        return raster, 0
    rep = np.repeat(np.arange(len(counts)), counts)
    x = ox0[rep] + rng.random(total) * (ox1 - ox0)[rep]
    y = oy0[rep] + rng.random(total) * (oy1 - oy0)[rep]
    d_um = cfg.sample_diameters_um(rng, total)
    rows = (paper.bounds[2] - x) / res_m
    cols = (y - paper.bounds[1]) / res_m
    radii = cfg.spread_factor * d_um / 2 / paper.resolution_um
    stamp_disks(raster.stained, rows, cols, radii)
    return raster, total


def run_pass(scene, timeline, cfg, duration_ms, pwm_period=100.0, jobs=1):
    """Simulate one pass of the boom over the scene.

    Parameters
    ----------
    scene : Scene
    timeline : sequence of (time_ms, bytes)
        Wire commands as sent by the control loop.
    cfg : DepositionConfig
    duration_ms : float
        Length of the pass; the boom starts at ``x = 0``.
    jobs : int
        Papers are independent (one RNG stream per paper), so they may be
        stamped concurrently without changing the output.
    """
    open_steps, on_time = valve_schedule(timeline, scene.boom.nozzle_count, pwm_period,
                                         duration_ms, cfg.step_ms)
    rate = emission_rate(scene.boom, cfg)
    band = spray_band_width(scene.boom)
    work = [(p, i, open_steps, scene, cfg, rate, band) for i, p in enumerate(scene.papers)]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(lambda a: _deposit_on_paper(*a), work))
    else:
        results = [_deposit_on_paper(*a) for a in work]
    rasters = {p.id: r for p, (r, _) in zip(scene.papers, results)}
    counts = {p.id: n for p, (_, n) in zip(scene.papers, results)}
    return PassResult(rasters, on_time, open_steps, counts)
