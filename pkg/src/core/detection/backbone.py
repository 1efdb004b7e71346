"""Feature providers feeding the detector heads."""
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.core.imaging.image import GrayImage, resize
from src.core.nn.network import LayerKind, LayerSpec, NetworkSpec, forward, init_params
from src.core.nn.weights_io import load_features
from src.utils.helpers import make_rng
from src.utils.logger import get_logger
from src.utils.validators import DataError, ValidationError, validate_shape

logger = get_logger(__name__)


class FeatureProvider(ABC):
    """Maps an image to a fixed-shape ``[h, w, c]`` feature map."""

    @property
    @abstractmethod
    def output_shape(self) -> Tuple[int, int, int]:
        """Shape of every feature map this provider emits."""

    @abstractmethod
    def _features(self, image: GrayImage) -> np.ndarray:
        """Compute the raw feature map."""

    def extract(self, image: GrayImage) -> np.ndarray:
        """Extract features and check them against :attr:`output_shape`.

        Raises:
            ShapeMismatchError: If the provider emitted a map of another shape
        """
        features = np.asarray(self._features(image), dtype=np.float32)
        validate_shape(features.shape, tuple(self.output_shape), f"{type(self).__name__} features")
        return features

    @property
    def feature_dim(self) -> int:
        return int(self.output_shape[2])

    @property
    def spatial(self) -> Tuple[int, int]:
        return int(self.output_shape[0]), int(self.output_shape[1])


class ToyBackbone(FeatureProvider):
    """Small fixed conv stack with seeded weights.

    The input is resized to ``input_size`` squared, then passes through two
    3x3 conv + ReLU + max-pool blocks (8 and ``channels`` filters).
    """

    def __init__(self, channels: int = 16, input_size: int = 32, seed: int = 0):
        if channels < 1 or input_size < 10:
            raise ValidationError(f"ToyBackbone needs channels >= 1 and input_size >= 10, got {channels}, {input_size}")
        self.input_size = input_size
        self.spec = NetworkSpec(
            (input_size, input_size, 1),
            [
                LayerSpec.conv(8, kernel_size=3),
                LayerSpec.of(LayerKind.RELU),
                LayerSpec.of(LayerKind.MAXPOOL2),
                LayerSpec.conv(channels, kernel_size=3),
                LayerSpec.of(LayerKind.RELU),
                LayerSpec.of(LayerKind.MAXPOOL2),
            ],
            name="toy_backbone",
        )
        self.params = init_params(self.spec, make_rng(seed))

    @property
    def output_shape(self) -> Tuple[int, int, int]:
        return self.spec.output_shape  # type: ignore[return-value]

    def _features(self, image: GrayImage) -> np.ndarray:
        pixels = resize(image.pixels, (self.input_size, self.input_size))[:, :, np.newaxis]
        return forward(self.spec, self.params, pixels).output


class IntensityBoxProvider(FeatureProvider):
    """Hand-crafted features describing the pixels inside an intensity band.

    The 1x1x8 map holds the band's normalized bounding box
    ``(x_min, y_min, x_max, y_max)``, a presence flag, the band's pixel
    fraction, its mean intensity and a constant 1.
    """

    FEATURE_DIM = 8

    def __init__(self, low: float, high: float, min_fraction: float = 0.02):
        if not 0.0 <= low < high <= 1.0:
            raise ValidationError(f"Intensity band [{low}, {high}] must satisfy 0 <= low < high <= 1")
        self.low = low
        self.high = high
        self.min_fraction = min_fraction

    @property
    def output_shape(self) -> Tuple[int, int, int]:
        return 1, 1, self.FEATURE_DIM

    def _features(self, image: GrayImage) -> np.ndarray:
        pixels = image.pixels
        band = (pixels >= self.low) & (pixels <= self.high)
        fraction = float(band.mean())
        features = np.zeros(self.FEATURE_DIM, dtype=np.float32)
        features[7] = 1.0
        if fraction < self.min_fraction:
            return features.reshape(1, 1, -1)

        rows = np.flatnonzero(band.any(axis=1))
        cols = np.flatnonzero(band.any(axis=0))
        h, w = pixels.shape
        features[:4] = (cols[0] / w, rows[0] / h, (cols[-1] + 1) / w, (rows[-1] + 1) / h)
        features[4] = 1.0
        features[5] = fraction
        features[6] = float(pixels[band].mean())
        return features.reshape(1, 1, -1)


class FileFeatureProvider(FeatureProvider):
    """Reads precomputed feature maps named after the image's source file.

    For an image decoded from ``frames/000123.pgm`` the provider loads
    ``<directory>/000123.blpw``.
    """

    def __init__(self, directory: Union[str, Path], shape: Tuple[int, int, int], suffix: str = ".blpw"):
        self.directory = Path(directory)
        self._shape = tuple(int(s) for s in shape)
        self.suffix = suffix

    @property
    def output_shape(self) -> Tuple[int, int, int]:
        return self._shape  # type: ignore[return-value]

    def path_for(self, image: GrayImage) -> Path:
        if image.source is None:
            raise DataError("FileFeatureProvider needs images decoded from a file")
        return self.directory / f"{Path(image.source).stem}{self.suffix}"

    def _features(self, image: GrayImage) -> np.ndarray:
        path = self.path_for(image)
        if not path.exists():
            raise DataError(f"No precomputed features at '{path}'")
        return load_features(path)


def build_provider(kind: str, **options: object) -> FeatureProvider:
    """Create a provider by name: ``toy``, ``intensity`` or ``file``."""
    if kind == "toy":
        return ToyBackbone(**options)  # type: ignore[arg-type]
    if kind == "intensity":
        return IntensityBoxProvider(**options)  # type: ignore[arg-type]
    if kind == "file":
        return FileFeatureProvider(**options)  # type: ignore[arg-type]
    raise ValidationError(f"Unknown feature provider '{kind}'")


def describe(provider: Optional[FeatureProvider]) -> str:
    if provider is None:
        return "none"
    return f"{type(provider).__name__}{tuple(provider.output_shape)}"
