"""Vehicle and plate detection heads."""
from src.core.detection.backbone import FeatureProvider, FileFeatureProvider, IntensityBoxProvider, ToyBackbone
from src.core.detection.heads import BBox, Detection, DetectorHead, DetectorStage, crop, detect

__all__ = [
    "BBox",
    "Detection",
    "DetectorHead",
    "DetectorStage",
    "FeatureProvider",
    "FileFeatureProvider",
    "IntensityBoxProvider",
    "ToyBackbone",
    "crop",
    "detect",
]
