import pytest

from spraysim import config


@pytest.fixture(scope="session")
def default_cfg():
    return config.load_default()


@pytest.fixture(scope="session")
def default_scene(default_cfg):
    return default_cfg.scene
