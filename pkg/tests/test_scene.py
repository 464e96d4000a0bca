import numpy as np
import pytest

from spraysim._validation import ConfigError
from spraysim.scene import (BoomConfig, CameraConfig, Ellipse, Plant, Polygon, Scene,
                            WspPlacement, ground_sampling_distance, project_footprint,
                            sector_for_pixel, spray_band_width)


def test_gsd_matches_trig():
    cam = CameraConfig(1, (1, 2), mount_height=0.35)
    gh, gv = ground_sampling_distance(cam)
    assert gh == pytest.approx(631.4769, abs=1e-3)
    assert gv == pytest.approx(634.1014, abs=1e-3)


@pytest.mark.parametrize("kw", [{"h_fov": 0.0}, {"mount_height": 0.0}, {"mount_height": -1.0}])
def test_degenerate_camera_rejected(kw):
    with pytest.raises(ConfigError):
        CameraConfig(1, (1, 2), **kw)


@pytest.mark.parametrize("height, width", [(0.35, 0.58737), (0.5, 0.83910)])
def test_band_width(height, width):
    assert spray_band_width(BoomConfig(boom_height=height)) == pytest.approx(width, abs=1e-5)


def test_zero_fan_rejected():
    with pytest.raises(ConfigError):
        BoomConfig(fan_angle=0)


@pytest.mark.parametrize("covered, x, nozzle", [((1, 2), 100, 1), ((1, 2), 320, 2),
                                                ((3, 4), 639, 4), ((1, 2), 0, 1)])
def test_sector_for_pixel(covered, x, nozzle):
    assert sector_for_pixel(CameraConfig(1, covered), x) == nozzle


@pytest.mark.parametrize("x", [-1, 640])
def test_sector_out_of_range(x):
    with pytest.raises(ValueError):
        sector_for_pixel(CameraConfig(1, (1, 2)), x)


def test_nozzle_positions_symmetric():
    boom = BoomConfig()
    ys = [boom.nozzle_y(n) for n in boom.nozzle_ids]
    assert ys == pytest.approx([-0.762, -0.254, 0.254, 0.762])


def test_polygon_area_and_contains():
    sq = Polygon(((0, 0), (2, 0), (2, 1), (0, 1)))
    assert sq.area == pytest.approx(2.0)
    assert sq.contains(np.array([1.0, 3.0]), np.array([0.5, 0.5])).tolist() == [True, False]


def test_plant_area_mismatch_rejected():
    with pytest.raises(ConfigError):
        Plant("p", (0, 0), Ellipse(0, 0, 0.1, 0.1), canopy_area=0.05)


def test_paper_raster_shape():
    assert WspPlacement("w", (0, 0)).shape == (600, 1801)


def test_scene_rejects_double_coverage():
    boom = BoomConfig()
    with pytest.raises(ConfigError):
        Scene(boom, [CameraConfig(1, (1, 2)), CameraConfig(2, (2, 3))])


def test_scene_rejects_unknown_plant_ref():
    with pytest.raises(ConfigError):
        Scene(BoomConfig(), (), (), [WspPlacement("w", (0, 0), plant_id="nope")])


def test_projection_area_tracks_footprint():
    cam = CameraConfig(1, (1, 2), mount_height=0.9)
    plant = Plant.circle("p", (1.0, 0.1), 0.02)
    proj = project_footprint(plant.footprint, cam, 1.0, 0.0, "p")
    gh, gv = ground_sampling_distance(cam)
    area = proj.mask.sum() * gh * gv * 1e-12
    assert area == pytest.approx(0.02, rel=0.02)
    x0, y0, x1, y1 = proj.box
    assert proj.mask.shape == (y1 - y0, x1 - x0)


def test_projection_outside_view_is_none():
    cam = CameraConfig(1, (1, 2))
    plant = Plant.circle("p", (10.0, 0.0), 0.02)
    assert project_footprint(plant.footprint, cam, 0.0, 0.0) is None


def test_default_scene_covers_every_nozzle(default_scene):
    covered = sorted(n for c in default_scene.cameras for n in c.covered_nozzles)
    assert covered == [1, 2, 3, 4]
    assert len(default_scene.plants) == 15 and len(default_scene.papers) == 15
