"""Shared pytest fixtures."""
from pathlib import Path

import numpy as np
import pytest

from src.core.imaging.synthetic import plate_classes, render_plate
from src.core.pipeline.fixtures import write_demo_models
from src.core.pipeline.models import ModelBundle


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def demo_models() -> ModelBundle:
    """File-free cascade with an untrained 16x16 OCR net."""
    return ModelBundle.demo(seed=0)


@pytest.fixture
def model_dir(tmp_path: Path) -> Path:
    """Directory holding demo weight files and their config.yaml."""
    write_demo_models(tmp_path / "models", seed=0)
    return tmp_path / "models"


@pytest.fixture
def clean_plate() -> np.ndarray:
    """Four-character plate card pixels."""
    return render_plate(plate_classes(4)).image.pixels
