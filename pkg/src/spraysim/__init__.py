"""Canopy-aware variable-rate sprayer simulation with spray-deposit analysis."""

__version__ = "0.1.0"

from .control import CanopyClass, CanopyClassifier, ControlConfig
from .detector import Detection, OracleDetector
from .scene import BoomConfig, CameraConfig, Scene
from .wsp import WspAnalyzer

__all__ = [
    "BoomConfig", "CameraConfig", "CanopyClass", "CanopyClassifier", "ControlConfig",
    "Detection", "OracleDetector", "Scene", "WspAnalyzer", "__version__",
]
