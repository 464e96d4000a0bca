import json

import pytest

from spraysim import config
from spraysim._validation import ConfigError


def test_default_scenario_loads(default_cfg):
    assert default_cfg.seed == 42
    assert default_cfg.control.duty_levels == (85, 170, 255)
    assert default_cfg.resolved_pass_length() > 13


def test_roundtrip(default_cfg):
    again = config.from_dict(json.loads(json.dumps(config.to_dict(default_cfg))))
    assert again == default_cfg


def test_manifest_is_accepted_as_config(default_cfg):
    text = json.dumps({"manifest_version": 1, "config": config.to_dict(default_cfg)})
    assert config.loads(text) == default_cfg


def test_with_seed_propagates(default_cfg):
    c = default_cfg.with_seed(7)
    assert c.seed == c.noise.seed == c.deposition.seed == 7


def _doc(**sections):
    base = json.loads(config.default_scenario_text())
    base.update(sections)
    return json.dumps(base, indent=2)


def test_threshold_order_error_has_line():
    text = _doc(control={"t1": 0.05, "t2": 0.03})
    with pytest.raises(ConfigError) as err:
        config.loads(text)
    assert err.value.field == "control.t1" or err.value.field.startswith("control")
    assert err.value.line is not None and '"t1"' in text.splitlines()[err.value.line - 1]


@pytest.mark.parametrize("sections", [
    {"boom": {"nozzle_spacing": -1}},
    {"boom": {"nozzels": 4}},
    {"control": {"duty_levels": [85, 170, 300]}},
    {"deposition": {"droplet_gsd": 1.0}},
    {"detector": {"conf_threshold": 2}},
    {"seed": -3},
    {"plants": [{"id": "a", "position": [0, 0]}]},
    {"cameras": [{"id": 1, "covered_nozzles": [1, 2]}]},
])
def test_invalid_configs_rejected(sections):
    with pytest.raises(ConfigError):
        config.loads(_doc(**sections))


def test_bad_json_reports_line():
    with pytest.raises(ConfigError) as err:
        config.loads('{\n  "seed": 1,\n  oops\n}')
    assert err.value.line == 3


def test_polygon_footprint():
    cfg = config.loads(json.dumps({"plants": [{"id": "sq", "position": [1, 0],
                                               "footprint": {"polygon": [[0.9, -0.1], [1.1, -0.1],
                                                                         [1.1, 0.1], [0.9, 0.1]]}}]}))
    assert cfg.scene.plants[0].canopy_area == pytest.approx(0.04)
