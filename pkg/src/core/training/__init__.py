"""Desk-scale training of the OCR network and detector heads."""
from src.core.training.augment import AugmentConfig, augment
from src.core.training.dataset import DatasetSplit, GlyphDataset, LabelEncoder, PrefetchLoader, split
from src.core.training.detector_trainer import train_detector_head
from src.core.training.gradcheck import GradCheckResult, gradient_check
from src.core.training.trainer import TrainResult, TrainingHistory, evaluate, train

__all__ = [
    "AugmentConfig",
    "DatasetSplit",
    "GlyphDataset",
    "GradCheckResult",
    "LabelEncoder",
    "PrefetchLoader",
    "TrainResult",
    "TrainingHistory",
    "augment",
    "evaluate",
    "gradient_check",
    "split",
    "train",
    "train_detector_head",
]
