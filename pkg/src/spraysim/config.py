"""Loading and validating scenario files (JSON). See ``docs/config.md`` for the schema."""

import json
import re
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Optional

from ._validation import ConfigError
from .control import ControlConfig
from .deposition import DepositionConfig
from .detector import OracleNoise
from .scene import BoomConfig, CameraConfig, Ellipse, Plant, Polygon, Scene, WspPlacement

SECTIONS = {"seed", "boom", "cameras", "plants", "papers", "control", "deposition", "detector"}
BOOM_KEYS = {"nozzle_count", "nozzle_spacing", "boom_height", "fan_angle", "nozzle_flow", "pressure"}
CAMERA_KEYS = {"id", "covered_nozzles", "mount_height", "h_fov", "v_fov", "image_width", "image_height"}
PLANT_KEYS = {"id", "position", "canopy_area", "footprint"}
PAPER_KEYS = {"id", "center", "plant", "width_mm", "height_mm", "resolution_um"}
CONTROL_KEYS = {"t1", "t2", "duty_levels", "pwm_period_ms", "min_pulse_ms",
                "latency_budget_ms", "frame_interval_ms"}
DEPOSITION_KEYS = {"robot_speed", "droplet_median_um", "droplet_gsd", "spread_factor",
                   "fan_depth", "step_ms", "pass_length"}
DETECTOR_KEYS = {"fn_rate", "fp_rate", "area_jitter", "conf_threshold"}

DEFAULT_SCENARIO = "default_scenario.json"


@dataclass(frozen=True)
class SimConfig:
    scene: Scene
    control: ControlConfig = field(default_factory=ControlConfig)
    deposition: DepositionConfig = field(default_factory=DepositionConfig)
    noise: OracleNoise = field(default_factory=OracleNoise)
    conf_threshold: float = 0.5
    seed: int = 0
    pass_length: Optional[float] = None  # m; None derives it from the scene

    def with_seed(self, seed):
        return replace(self, seed=seed, noise=replace(self.noise, seed=seed),
                       deposition=replace(self.deposition, seed=seed))

    def resolved_pass_length(self):
        if self.pass_length is not None:
            return self.pass_length
        xs = [p.footprint.bounds[2] for p in self.scene.plants]
        xs += [w.bounds[2] for w in self.scene.papers]
        return (max(xs) if xs else 0.0) + 1.0


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", field=where)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", field=where)


def _pick(obj, mapping):
    return {dst: obj[src] for src, dst in mapping.items() if src in obj}


def _footprint(spec, position, where):
    if spec is None:
        return None
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError('expected {"ellipse": [semi_x, semi_y]} or {"polygon": [[x, y], ...]}',
                          field=where)
    (kind, value), = spec.items()
    if kind == "ellipse":
        if not (isinstance(value, list) and len(value) == 2 and all(v > 0 for v in value)):
            raise ConfigError("ellipse needs two positive semi-axes", field=where)
        return Ellipse(position[0], position[1], float(value[0]), float(value[1]))
    if kind == "polygon":
        return Polygon(tuple(tuple(v) for v in value))
    raise ConfigError(f"unknown footprint type {kind!r}", field=where)


def _plant(obj, i):
    where = f"plants[{i}]"
    _check_keys(obj, PLANT_KEYS, where)
    if "id" not in obj or "position" not in obj:
        raise ConfigError("id and position are required", field=where)
    pos = tuple(obj["position"])
    fp = _footprint(obj.get("footprint"), pos, f"{where}.footprint")
    area = obj.get("canopy_area")
    if fp is None:
        if area is None:
            raise ConfigError("need canopy_area or footprint", field=where)
        if not area > 0:
            raise ConfigError("must be > 0", field=f"{where}.canopy_area")
        return Plant.circle(str(obj["id"]), pos, area)
    return Plant(str(obj["id"]), pos, fp, area)


def from_dict(data):
    """Build a :class:`SimConfig` from a parsed scenario document."""
    _check_keys(data, SECTIONS, "<root>")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        raise ConfigError("must be a non-negative 64-bit integer", field="seed")

    b = data.get("boom", {})
    _check_keys(b, BOOM_KEYS, "boom")
    boom = BoomConfig(**b)

    cams_raw = data.get("cameras")
    if cams_raw is None:
        cameras = Scene.default_cameras(boom)
    else:
        if not isinstance(cams_raw, list):
            raise ConfigError("expected a list", field="cameras")
        cameras = []
        for i, c in enumerate(cams_raw):
            _check_keys(c, CAMERA_KEYS, f"cameras[{i}]")
            if "id" not in c or "covered_nozzles" not in c:
                raise ConfigError("id and covered_nozzles are required", field=f"cameras[{i}]")
            cameras.append(CameraConfig(**c))

    plants = [_plant(p, i) for i, p in enumerate(data.get("plants", []))]

    papers = []
    for i, p in enumerate(data.get("papers", [])):
        _check_keys(p, PAPER_KEYS, f"papers[{i}]")
        if "id" not in p or "center" not in p:
            raise ConfigError("id and center are required", field=f"papers[{i}]")
        kw = _pick(p, {"width_mm": "width_mm", "height_mm": "height_mm",
                       "resolution_um": "resolution_um", "plant": "plant_id"})
        papers.append(WspPlacement(str(p["id"]), tuple(p["center"]), **kw))

    scene = Scene(boom, cameras, plants, papers)

    c = data.get("control", {})
    _check_keys(c, CONTROL_KEYS, "control")
    control = ControlConfig(**_pick(c, {
        "t1": "t1", "t2": "t2", "duty_levels": "duty_levels", "pwm_period_ms": "pwm_period",
        "min_pulse_ms": "min_pulse", "latency_budget_ms": "latency_budget",
        "frame_interval_ms": "frame_interval"}))

    d = dict(data.get("deposition", {}))
    _check_keys(d, DEPOSITION_KEYS, "deposition")
    pass_length = d.pop("pass_length", None)
    if pass_length is not None and not pass_length > 0:
        raise ConfigError("must be > 0", field="deposition.pass_length")
    deposition = DepositionConfig(seed=seed, **d)

    det = dict(data.get("detector", {}))
    _check_keys(det, DETECTOR_KEYS, "detector")
    conf = det.pop("conf_threshold", 0.5)
    if not 0 <= conf <= 1:
        raise ConfigError("must lie in [0, 1]", field="detector.conf_threshold")
    noise = OracleNoise(seed=seed, **det)

    return SimConfig(scene, control, deposition, noise, conf, seed, pass_length)


def _line_of(text, field_path):
    if not field_path:
        return None
    key = re.split(r"[.\[]", field_path.rstrip("]"))[-1].rstrip("]")
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def loads(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from None
    if isinstance(data, dict) and "config" in data and "manifest_version" in data:
        data = data["config"]  # a run manifest carries its resolved config
    try:
        return from_dict(data)
    except ConfigError as exc:
        raise ConfigError(exc.message, field=exc.field, line=_line_of(text, exc.field)) from None
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def default_scenario_text():
    return resources.files("spraysim.data").joinpath(DEFAULT_SCENARIO).read_text(encoding="utf-8")


def load_default():
    return loads(default_scenario_text())


def to_dict(cfg):
    """Fully resolved scenario document; ``from_dict(to_dict(c))`` rebuilds ``c``."""
    scene = cfg.scene

    def footprint(fp):
        if isinstance(fp, Ellipse):
            return {"ellipse": [fp.semi_x, fp.semi_y]}
        return {"polygon": [list(v) for v in fp.vertices]}

    ctl = cfg.control
    dep = asdict(cfg.deposition)
    dep.pop("seed")
    if cfg.pass_length is not None:
        dep["pass_length"] = cfg.pass_length
    return {
        "seed": cfg.seed,
        "boom": asdict(scene.boom),
        "cameras": [dict(asdict(c), covered_nozzles=list(c.covered_nozzles)) for c in scene.cameras],
        "plants": [{"id": p.id, "position": list(p.position), "canopy_area": p.canopy_area,
                    "footprint": footprint(p.footprint)} for p in scene.plants],
        "papers": [{k: v for k, v in {
            "id": w.id, "center": list(w.center), "plant": w.plant_id, "width_mm": w.width_mm,
            "height_mm": w.height_mm, "resolution_um": w.resolution_um}.items() if v is not None}
            for w in scene.papers],
        "control": {"t1": ctl.t1, "t2": ctl.t2, "duty_levels": list(ctl.duty_levels),
                    "pwm_period_ms": ctl.pwm_period, "min_pulse_ms": ctl.min_pulse,
                    "latency_budget_ms": ctl.latency_budget, "frame_interval_ms": ctl.frame_interval},
        "deposition": dep,
        "detector": {"fn_rate": cfg.noise.fn_rate, "fp_rate": cfg.noise.fp_rate,
                     "area_jitter": cfg.noise.area_jitter, "conf_threshold": cfg.conf_threshold},
    }
