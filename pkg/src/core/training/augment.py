"""Seeded image augmentation for glyph and detector training."""
from typing import Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import ndimage

from src.utils.logger import get_logger

logger = get_logger(__name__)


class AugmentConfig(BaseModel):
    """Magnitudes of the random transforms; every transform is off at 0.

    Geometric magnitudes are symmetric: a shift of 0.1 draws offsets in
    [-10%, +10%] of the image size, a rotation of 7.5 draws angles in
    [-7.5, +7.5] degrees, and so on.
    """

    shift: float = Field(default=0.10, ge=0.0)
    rotation: float = Field(default=7.5, ge=0.0)
    zoom: float = Field(default=0.20, ge=0.0, lt=1.0)
    shear: float = Field(default=0.20, ge=0.0)
    flip: bool = False
    contrast: float = Field(default=0.0, ge=0.0, lt=1.0)
    blur_sigma: Tuple[float, float] = (0.0, 0.0)
    salt_pepper: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = 42

    @model_validator(mode="after")
    def check_blur_range(self) -> "AugmentConfig":
        low, high = self.blur_sigma
        if low < 0 or high < low:
            raise ValueError(f"blur_sigma must satisfy 0 <= low <= high, got {self.blur_sigma}")
        return self

    @property
    def geometric(self) -> bool:
        return any((self.shift, self.rotation, self.zoom, self.shear))

    @classmethod
    def ocr_recipe(cls, **overrides) -> "AugmentConfig":  # type: ignore
        """Shift 10%, rotation 7.5 degrees, zoom 20%, shear 20%."""
        return cls(**overrides)

    @classmethod
    def detector_recipe(cls, **overrides) -> "AugmentConfig":  # type: ignore
        """Rotation, shift, flip, contrast, blur and salt-and-pepper noise."""
        values = dict(zoom=0.0, shear=0.0, flip=True, contrast=0.2, blur_sigma=(0.0, 1.0), salt_pepper=0.01)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def disabled(cls, seed: int = 42) -> "AugmentConfig":
        return cls(shift=0.0, rotation=0.0, zoom=0.0, shear=0.0, seed=seed)


def affine_matrix(rotation_deg: float, shear: float, zoom: float) -> np.ndarray:
    """Output-to-input matrix in ``(row, col)`` coordinates."""
    theta = np.deg2rad(rotation_deg)
    rotate = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    shear_m = np.array([[1.0, 0.0], [shear, 1.0]])
    forward = rotate @ shear_m * zoom
    return np.linalg.inv(forward)


def augment(image: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Apply one random composition of the enabled transforms.

    Random draws happen in a fixed order whatever is enabled, so a seed
    produces the same stream across configs. Pixels are clamped to [0, 1].

    Args:
        image: 2-D array, or ``[h, w, 1]``
        config: Transform magnitudes
        rng: Seeded generator

    Returns:
        Augmented array of the input's shape and dtype
    """
    original = np.asarray(image)
    squeeze = original.ndim == 3
    pixels = (original[:, :, 0] if squeeze else original).astype(np.float64)
    h, w = pixels.shape

    angle = rng.uniform(-config.rotation, config.rotation)
    shear = rng.uniform(-config.shear, config.shear)
    zoom = rng.uniform(1.0 - config.zoom, 1.0 + config.zoom)
    dy, dx = rng.uniform(-config.shift, config.shift, size=2) * (h, w)
    flip = rng.random() < 0.5
    gain = rng.uniform(1.0 - config.contrast, 1.0 + config.contrast)
    sigma = rng.uniform(*config.blur_sigma)
    noise = rng.random((h, w))
    salt = rng.random((h, w)) < 0.5

    if config.geometric:
        matrix = affine_matrix(angle, shear, zoom)
        center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
        offset = center - matrix @ (center + (dy, dx))
        pixels = ndimage.affine_transform(pixels, matrix, offset=offset, order=1, mode="nearest")
    if config.flip and flip:
        pixels = pixels[:, ::-1]
    if config.contrast:
        mean = pixels.mean()
        pixels = mean + (pixels - mean) * gain
    if sigma > 0:
        pixels = ndimage.gaussian_filter(pixels, sigma, mode="nearest")
    if config.salt_pepper:
        hit = noise < config.salt_pepper
        pixels = np.where(hit, salt.astype(np.float64), pixels)

    out = np.clip(pixels, 0.0, 1.0).astype(original.dtype)
    return out[:, :, np.newaxis] if squeeze else out


def augment_batch(images: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Augment every sample of a ``[n, h, w, 1]`` batch independently."""
    return np.stack([augment(img, config, rng) for img in images])
