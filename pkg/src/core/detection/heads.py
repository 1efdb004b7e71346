"""Dual-branch bounding-box heads, detection and cropping."""
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.core.detection.backbone import FeatureProvider
from src.core.imaging.image import GrayImage
from src.core.nn.architectures import build_detector_head
from src.core.nn.network import NetworkSpec, ParameterStore, check_params, forward, init_params, zero_params
from src.core.nn.weights_io import load_weights, save_weights
from src.utils.logger import get_logger
from src.utils.validators import (
    DegenerateCropError,
    ShapeMismatchError,
    validate_bbox,
    validate_probability,
)

logger = get_logger(__name__)


class DetectorStage(str, Enum):
    """Cascade stage a detection belongs to."""
    VEHICLE = "vehicle"
    PLATE = "plate"


class BBox:
    """Axis-aligned box with coordinates normalized to [0, 1]."""

    def __init__(self, x_min: float, y_min: float, x_max: float, y_max: float):
        """Initialize box.

        Raises:
            ValidationError: If a coordinate is outside [0, 1] or min > max
        """
        validate_bbox(x_min, y_min, x_max, y_max)
        self.x_min = float(x_min)
        self.y_min = float(y_min)
        self.x_max = float(x_max)
        self.y_max = float(y_max)

    @classmethod
    def from_output(cls, values: Sequence[float]) -> "BBox":
        """Box from a raw regression output: clamp to [0, 1], then order each axis."""
        x0, y0, x1, y1 = (float(np.clip(v, 0.0, 1.0)) for v in values)
        return cls(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max], dtype=np.float64)

    def pixel_bounds(self, height: int, width: int) -> Tuple[int, int, int, int]:
        """``(y0, x0, y1, x1)`` rounded to the nearest pixel edge (halves round up)."""
        x0 = int(np.floor(self.x_min * width + 0.5))
        x1 = int(np.floor(self.x_max * width + 0.5))
        y0 = int(np.floor(self.y_min * height + 0.5))
        y1 = int(np.floor(self.y_max * height + 0.5))
        return y0, x0, y1, x1

    def to_list(self, ndigits: int = 6) -> list:
        return [round(v, ndigits) for v in self.as_array().tolist()]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BBox):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))

    def __repr__(self) -> str:
        return f"BBox({self.x_min:.3f}, {self.y_min:.3f}, {self.x_max:.3f}, {self.y_max:.3f})"


class Detection:
    """A thresholded head output."""

    def __init__(self, bbox: BBox, class_probs: np.ndarray, stage: DetectorStage):
        self.bbox = bbox
        self.class_probs = np.asarray(class_probs, dtype=np.float64)
        self.stage = stage

    @property
    def score(self) -> float:
        """Object-class probability."""
        return float(self.class_probs[0])

    def to_dict(self) -> dict:
        return {"stage": self.stage.value, "bbox": self.bbox.to_list(), "score": round(self.score, 6)}


class DetectorHead:
    """Class and bbox branches sharing one feature input and one weight file."""

    def __init__(
        self,
        feature_dim: int,
        spatial: Tuple[int, int] = (1, 1),
        dropout_rate: float = 0.2,
        params: Optional[ParameterStore] = None,
    ):
        """Initialize head.

        Args:
            feature_dim: Channels of the provider's feature map
            spatial: Spatial extent of the feature map
            dropout_rate: Dropout between dense layers (training only)
            params: Combined parameters of both branches; zeros when omitted

        Raises:
            ShapeMismatchError: If params do not match the branch specs
        """
        self.class_spec, self.bbox_spec = build_detector_head(feature_dim, spatial, dropout_rate)
        if params is None:
            params = merge_params(zero_params(self.class_spec), zero_params(self.bbox_spec))
        self.class_params, self.bbox_params = split_params(params, self.class_spec, self.bbox_spec)

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.class_spec.input_shape

    @property
    def params(self) -> ParameterStore:
        return merge_params(self.class_params, self.bbox_params)

    @classmethod
    def initialized(
        cls, feature_dim: int, rng: np.random.Generator, spatial: Tuple[int, int] = (1, 1), dropout_rate: float = 0.2
    ) -> "DetectorHead":
        head = cls(feature_dim, spatial, dropout_rate)
        return cls(feature_dim, spatial, dropout_rate, merge_params(init_params(head.class_spec, rng), init_params(head.bbox_spec, rng)))

    @classmethod
    def load(
        cls, path: Union[str, Path], feature_dim: int, spatial: Tuple[int, int] = (1, 1), dropout_rate: float = 0.2
    ) -> "DetectorHead":
        """Load both branches from one weight file."""
        return cls(feature_dim, spatial, dropout_rate, load_weights(path))

    def save(self, path: Union[str, Path]) -> Path:
        return save_weights(self.params, path)

    def predict(self, features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Inference pass.

        Returns:
            Tuple ``(class_probs, raw_bbox)`` for a single feature map
        """
        features = np.asarray(features, dtype=np.float32)
        if features.shape != self.input_shape:
            raise ShapeMismatchError(f"Head expects features {self.input_shape}, got {features.shape}")
        probs = forward(self.class_spec, self.class_params, features).output
        box = forward(self.bbox_spec, self.bbox_params, features).output
        return probs, box


def merge_params(class_params: ParameterStore, bbox_params: ParameterStore) -> ParameterStore:
    tensors = dict(class_params.tensors)
    tensors.update(bbox_params.tensors)
    return ParameterStore(tensors)


def split_params(
    params: ParameterStore, class_spec: NetworkSpec, bbox_spec: NetworkSpec
) -> Tuple[ParameterStore, ParameterStore]:
    """Separate a combined store into per-branch stores, checking shapes."""
    stores = []
    for spec in (class_spec, bbox_spec):
        names = [layer.name for _, layer in spec.parametric_layers()]
        missing = [n for n in names if n not in params]
        if missing:
            raise ShapeMismatchError(f"Head parameters lack layers {missing}")
        store = ParameterStore({n: params[n] for n in names})
        check_params(spec, store)
        stores.append(store)
    extra = set(params.names()) - {n for s in stores for n in s.names()}
    if extra:
        raise ShapeMismatchError(f"Head parameters hold unknown layers {sorted(extra)}")
    return stores[0], stores[1]


def handcrafted_params(
    feature_dim: int,
    box_index: int = 0,
    presence_index: int = 4,
    gain: float = 12.0,
    dropout_rate: float = 0.2,
) -> ParameterStore:
    """Head weights that read a box and a presence flag straight from the features.

    The bbox branch copies features ``box_index..box_index+3`` through every
    dense layer; the class branch turns feature ``presence_index`` (0 or 1)
    into logits ``+-gain * (2 * presence - 1)``. Pairs with
    :class:`IntensityBoxProvider`, whose features are non-negative.
    """
    class_spec, bbox_spec = build_detector_head(feature_dim, (1, 1), dropout_rate)
    class_params = zero_params(class_spec)
    bbox_params = zero_params(bbox_spec)

    box_units = list(range(box_index, box_index + 4))
    for spec, store, carried in ((bbox_spec, bbox_params, box_units), (class_spec, class_params, [presence_index])):
        dense = [layer.name for _, layer in spec.parametric_layers()]
        for depth, name in enumerate(dense[:-1]):
            weights, _ = store[name]
            for unit, source in enumerate(carried):
                weights[source if depth == 0 else unit, unit] = 1.0
        last = dense[-1]
        weights, bias = store[last]
        if spec is bbox_spec:
            for unit in range(4):
                weights[unit, unit] = 1.0
        else:
            weights[0, 0], weights[0, 1] = 2.0 * gain, -2.0 * gain
            bias[0], bias[1] = -gain, gain
    return merge_params(class_params, bbox_params)


def detect(
    image: GrayImage,
    provider: FeatureProvider,
    head: DetectorHead,
    score_threshold: float,
    stage: DetectorStage = DetectorStage.VEHICLE,
) -> Optional[Detection]:
    """Run one cascade stage.

    Args:
        image: Frame (vehicle stage) or vehicle crop (plate stage)
        provider: Feature provider matching the head's input shape
        head: Detector head
        score_threshold: Minimum object probability, in [0, 1]
        stage: Stage tag recorded on the detection

    Returns:
        Detection when the object probability reaches the threshold, else None
    """
    validate_probability(score_threshold, "score_threshold")
    probs, raw_box = head.predict(provider.extract(image))
    if float(probs[0]) < score_threshold:
        logger.debug(f"{stage.value}: score {float(probs[0]):.4f} below {score_threshold}")
        return None
    return Detection(BBox.from_output(raw_box), probs, stage)


def crop(image: GrayImage, bbox: BBox) -> GrayImage:
    """Cut the pixel rectangle of a normalized box out of an image.

    Raises:
        DegenerateCropError: If the rounded rectangle is empty
    """
    y0, x0, y1, x1 = bbox.pixel_bounds(image.height, image.width)
    if x1 - x0 < 1 or y1 - y0 < 1:
        raise DegenerateCropError(f"{bbox} rounds to an empty crop on a {image.width}x{image.height} image")
    return GrayImage(image.pixels[y0:y1, x0:x1], image.source)


def bbox_mse(predicted: BBox, target: BBox) -> float:
    """Mean squared difference over the four normalized coordinates."""
    return float(np.mean((predicted.as_array() - target.as_array()) ** 2))
