"""Physical configuration of the sprayer and the geometric conversions built on it.

World frame: ``x`` points along the direction of travel, ``y`` along the boom,
origin at the robot start position. The boom (and the cameras mounted on it)
sits at ``x = robot_speed * t``. Camera images are oriented with the image
``x`` axis (columns) along the boom and the image ``y`` axis (rows) against
the direction of travel, so ground ahead of the boom appears near row 0.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from ._validation import ConfigError, check_open_interval, check_positive

GALLON_L = 3.785411784
# 0.15 US gal/min, the rated flow of the even flat-fan tip at 40 psi
DEFAULT_NOZZLE_FLOW_LPM = 0.15 * GALLON_L

WSP_WIDTH_MM = 76.2
WSP_HEIGHT_MM = 25.4


@dataclass(frozen=True)
class BoomConfig:
    nozzle_count: int = 4
    nozzle_spacing: float = 0.508  # m
    boom_height: float = 0.35  # m
    fan_angle: float = 80.0  # degrees
    nozzle_flow: float = DEFAULT_NOZZLE_FLOW_LPM  # L/min at reference pressure
    pressure: float = 40.0  # psi

    def __post_init__(self):
        if not isinstance(self.nozzle_count, int) or self.nozzle_count < 1:
            raise ConfigError("must be an integer >= 1", field="boom.nozzle_count")
        check_positive(self.nozzle_spacing, "boom.nozzle_spacing")
        check_positive(self.boom_height, "boom.boom_height")
        check_open_interval(self.fan_angle, 0, 180, "boom.fan_angle")
        check_positive(self.nozzle_flow, "boom.nozzle_flow")
        check_positive(self.pressure, "boom.pressure")

    @property
    def nozzle_ids(self):
        return list(range(1, self.nozzle_count + 1))

    def nozzle_y(self, nozzle):
        """Boom-axis position of a nozzle; the boom is centred on ``y = 0``."""
        if not 1 <= nozzle <= self.nozzle_count:
            raise ValueError(f"nozzle {nozzle} outside 1..{self.nozzle_count}")
        return (nozzle - (self.nozzle_count + 1) / 2) * self.nozzle_spacing


@dataclass(frozen=True)
class CameraConfig:
    id: int
    covered_nozzles: Tuple[int, int]
    mount_height: float = 0.9  # m
    h_fov: float = 60.0  # degrees
    v_fov: float = 47.0  # degrees
    image_width: int = 640
    image_height: int = 480

    def __post_init__(self):
        where = f"cameras[{self.id}]"
        object.__setattr__(self, "covered_nozzles", tuple(self.covered_nozzles))
        if len(self.covered_nozzles) != 2:
            raise ConfigError("must list exactly two nozzles", field=f"{where}.covered_nozzles")
        check_open_interval(self.h_fov, 0, 180, f"{where}.h_fov")
        check_open_interval(self.v_fov, 0, 180, f"{where}.v_fov")
        check_positive(self.mount_height, f"{where}.mount_height")
        for name in ("image_width", "image_height"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 2:
                raise ConfigError("must be an integer >= 2", field=f"{where}.{name}")


@dataclass(frozen=True)
class Ellipse:
    """Axis-aligned ellipse in world coordinates (metres)."""

    cx: float
    cy: float
    semi_x: float
    semi_y: float

    @property
    def area(self):
        return math.pi * self.semi_x * self.semi_y

    @property
    def bounds(self):
        return (self.cx - self.semi_x, self.cy - self.semi_y,
                self.cx + self.semi_x, self.cy + self.semi_y)

    def contains(self, x, y):
        return ((x - self.cx) / self.semi_x) ** 2 + ((y - self.cy) / self.semi_y) ** 2 <= 1.0


@dataclass(frozen=True)
class Polygon:
    """Simple polygon in world coordinates; vertices as ``(x, y)`` pairs."""

    vertices: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise ConfigError("polygon needs at least 3 vertices")
        object.__setattr__(self, "vertices", verts)

    @property
    def area(self):
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    @property
    def bounds(self):
        v = np.asarray(self.vertices)
        return (*v.min(axis=0), *v.max(axis=0))

    def contains(self, x, y):
        # even-odd ray casting, vectorised over the query points
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        verts = self.vertices
        for (x1, y1), (x2, y2) in zip(verts, verts[1:] + verts[:1]):
            if y1 == y2:
                continue
            crosses = (y1 > y) != (y2 > y)
            x_at = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < x_at)
        return inside


Footprint = Union[Ellipse, Polygon]


@dataclass(frozen=True)
class Plant:
    id: str
    position: Tuple[float, float]
    footprint: Footprint
    canopy_area: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        true_area = self.footprint.area
        if true_area <= 0:
            raise ConfigError("footprint has zero area", field=f"plants[{self.id}].footprint")
        if self.canopy_area is None:
            object.__setattr__(self, "canopy_area", true_area)
        elif abs(self.canopy_area - true_area) > 0.01 * true_area:
            raise ConfigError(
                f"canopy_area {self.canopy_area:.6g} disagrees with footprint area "
                f"{true_area:.6g} by more than 1%", field=f"plants[{self.id}].canopy_area")

    @classmethod
    def circle(cls, id, position, area):
        r = math.sqrt(area / math.pi)
        return cls(id, position, Ellipse(position[0], position[1], r, r))


@dataclass(frozen=True)
class WspPlacement:
    """A water-sensitive paper lying flat at ``center``; its long side runs along the boom."""

    id: str
    center: Tuple[float, float]
    width_mm: float = WSP_WIDTH_MM
    height_mm: float = WSP_HEIGHT_MM
    resolution_um: float = 42.3
    plant_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        where = f"papers[{self.id}]"
        check_positive(self.width_mm, f"{where}.width_mm")
        check_positive(self.height_mm, f"{where}.height_mm")
        check_positive(self.resolution_um, f"{where}.resolution_um")
        if min(self.shape) < 1:
            raise ConfigError("paper is smaller than one pixel", field=where)

    @property
    def shape(self):
        """Raster shape ``(rows, cols)``; rows run along travel, columns along the boom."""
        return (round(self.height_mm * 1000 / self.resolution_um),
                round(self.width_mm * 1000 / self.resolution_um))

    @property
    def bounds(self):
        """World extent ``(x_min, y_min, x_max, y_max)`` in metres."""
        hx = self.height_mm / 2000
        hy = self.width_mm / 2000
        cx, cy = self.center
        return (cx - hx, cy - hy, cx + hx, cy + hy)


@dataclass(frozen=True)
class PlantProjection:
    """Ground-truth image footprint of one plant: integer box and the mask inside it."""

    plant_id: str
    box: Tuple[int, int, int, int]
    mask: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class Scene:
    boom: BoomConfig = field(default_factory=BoomConfig)
    cameras: Tuple[CameraConfig, ...] = ()
    plants: Tuple[Plant, ...] = ()
    papers: Tuple[WspPlacement, ...] = ()

    def __post_init__(self):
        for name in ("cameras", "plants", "papers"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        seen = {}
        for cam in self.cameras:
            for n in cam.covered_nozzles:
                if n not in self.boom.nozzle_ids:
                    raise ConfigError(f"nozzle {n} does not exist",
                                      field=f"cameras[{cam.id}].covered_nozzles")
                if n in seen:
                    raise ConfigError(f"nozzle {n} covered by cameras {seen[n]} and {cam.id}",
                                      field="cameras")
                seen[n] = cam.id
        missing = sorted(set(self.boom.nozzle_ids) - set(seen))
        if self.cameras and missing:
            raise ConfigError(f"nozzles {missing} are not covered by any camera", field="cameras")
        for kind in ("cameras", "plants", "papers"):
            ids = [item.id for item in getattr(self, kind)]
            if len(ids) != len(set(ids)):
                raise ConfigError("duplicate ids", field=kind)
        plant_ids = {p.id for p in self.plants}
        for paper in self.papers:
            if paper.plant_id is not None and paper.plant_id not in plant_ids:
                raise ConfigError(f"unknown plant {paper.plant_id!r}", field=f"papers[{paper.id}].plant")

    @classmethod
    def default_cameras(cls, boom, **camera_kw):
        """One camera per adjacent nozzle pair, as on the reference boom."""
        if boom.nozzle_count % 2:
            raise ConfigError("default camera layout needs an even nozzle count", field="cameras")
        return tuple(CameraConfig(k + 1, (2 * k + 1, 2 * k + 2), **camera_kw)
                     for k in range(boom.nozzle_count // 2))

    def camera_center_y(self, camera):
        return float(np.mean([self.boom.nozzle_y(n) for n in camera.covered_nozzles]))

    def project(self, camera, boom_x):
        """Project every plant visible to ``camera`` when the boom is at ``boom_x``."""
        out = []
        for plant in self.plants:
            proj = project_footprint(plant.footprint, camera, boom_x,
                                     self.camera_center_y(camera), plant.id)
            if proj is not None:
                out.append(proj)
        return out


def ground_sampling_distance(camera):
    """Ground size of one pixel as ``(horizontal, vertical)`` in µm/pixel."""
    h, hf, vf = camera.mount_height, camera.h_fov, camera.v_fov
    if not h > 0:
        raise ConfigError("mount_height must be > 0", field="camera.mount_height")
    if not (0 < hf < 180 and 0 < vf < 180):
        raise ConfigError("field of view must lie in (0, 180) degrees", field="camera.fov")
    gsd_h = 2 * h * math.tan(math.radians(hf) / 2) / camera.image_width
    gsd_v = 2 * h * math.tan(math.radians(vf) / 2) / camera.image_height
    return gsd_h * 1e6, gsd_v * 1e6


def spray_band_width(boom):
    """Ground width (m) wetted by one flat-fan nozzle at the boom height."""
    return 2 * boom.boom_height * math.tan(math.radians(boom.fan_angle) / 2)


def sector_for_pixel(camera, pixel_x):
    """Nozzle responsible for image column ``pixel_x``; the midpoint belongs to the right half."""
    if not 0 <= pixel_x < camera.image_width:
        raise ValueError(f"pixel_x {pixel_x} outside [0, {camera.image_width})")
    left, right = camera.covered_nozzles
    return left if pixel_x < camera.image_width / 2 else right


def project_footprint(footprint, camera, boom_x, camera_y, plant_id=""):
    """Rasterise a world footprint into ``camera``'s image; ``None`` if not visible.

    A pixel belongs to the footprint when its centre does.
    """
    gsd_h, gsd_v = (g * 1e-6 for g in ground_sampling_distance(camera))
    W, H = camera.image_width, camera.image_height
    y0 = camera_y - W * gsd_h / 2
    x_top = boom_x + H * gsd_v / 2

    fx0, fy0, fx1, fy1 = footprint.bounds
    c0 = max(int(math.floor((fy0 - y0) / gsd_h)), 0)
    c1 = min(int(math.ceil((fy1 - y0) / gsd_h)), W)
    r0 = max(int(math.floor((x_top - fx1) / gsd_v)), 0)
    r1 = min(int(math.ceil((x_top - fx0) / gsd_v)), H)
    if c0 >= c1 or r0 >= r1:
        return None

    cols = np.arange(c0, c1)
    rows = np.arange(r0, r1)
    wy = y0 + (cols + 0.5) * gsd_h
    wx = x_top - (rows + 0.5) * gsd_v
    mask = footprint.contains(wx[:, None], wy[None, :])
    if not mask.any():
        return None
    rr = np.flatnonzero(mask.any(axis=1))
    cc = np.flatnonzero(mask.any(axis=0))
    mask = mask[rr[0]:rr[-1] + 1, cc[0]:cc[-1] + 1]
    box = (c0 + int(cc[0]), r0 + int(rr[0]), c0 + int(cc[-1]) + 1, r0 + int(rr[-1]) + 1)
    return PlantProjection(plant_id, box, mask)
