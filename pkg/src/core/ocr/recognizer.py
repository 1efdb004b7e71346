"""Character classification and the conditional-deblur plate reader."""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.core.deblur.filters import MOTION_KERNEL_BANK, ImageLike, as_array, motion_kernel, sharpness_gate
from src.core.deblur.fista import FistaConfig, fista_deblur
from src.core.nn.network import Network
from src.core.ocr.classes import CharClassSet
from src.core.ocr.wordmap import WordMapTable, map_plate
from src.core.segmentation.components import CharacterCrop
from src.core.segmentation.level_sets import SegmentationModel
from src.core.segmentation.segmenter import SegmentConfig, SegmentationOutcome, segment_characters
from src.utils.helpers import StageTimer
from src.utils.logger import get_logger
from src.utils.validators import ShapeMismatchError

logger = get_logger(__name__)


class Recognition:
    """Classifier verdict for one character crop."""

    def __init__(self, class_index: int, label: str, confidence: float, row: int = 0):
        self.class_index = class_index
        self.label = label
        self.confidence = confidence
        self.row = row

    def to_dict(self) -> dict:
        return {"label": self.label, "conf": round(self.confidence, 6)}

    def __repr__(self) -> str:
        return f"Recognition({self.label!r}, {self.confidence:.3f})"


class PlateReading:
    """Everything read from one plate crop."""

    def __init__(
        self,
        recognitions: List[Recognition],
        plate_string: str,
        timings_ms: Dict[str, float],
        retries: int,
        segmentation_model: Optional[SegmentationModel],
        unreadable: bool = False,
    ):
        self.recognitions = recognitions
        self.plate_string = plate_string
        self.timings_ms = timings_ms
        self.retries = retries
        self.segmentation_model = segmentation_model
        self.unreadable = unreadable

    @property
    def raw(self) -> str:
        return "".join(r.label for r in self.recognitions)

    @property
    def char_count(self) -> int:
        return len(self.recognitions)

    def to_dict(self) -> dict:
        return {
            "chars": [r.to_dict() for r in self.recognitions],
            "raw": self.raw,
            "plate_string": self.plate_string,
            "retries": self.retries,
            "segmentation_model": self.segmentation_model.value if self.segmentation_model else None,
            "unreadable": self.unreadable,
        }


class RecognizerConfig(BaseModel):
    """Settings of the plate-reading loop."""

    min_chars: int = Field(default=4, ge=1)
    max_retries: int = Field(default=3, ge=0)
    sharpness_threshold: float = Field(default=1e-4, ge=0.0)
    kernel_bank: Tuple[int, ...] = Field(default=MOTION_KERNEL_BANK, min_length=1)
    fista: FistaConfig = Field(default_factory=FistaConfig)
    segment: SegmentConfig = Field(default_factory=SegmentConfig)


def _net_input(pixels: np.ndarray, net: Network) -> np.ndarray:
    h, w, c = net.spec.input_shape
    if pixels.shape != (h, w) or c != 1:
        raise ShapeMismatchError(f"Crop {pixels.shape} does not match network input {net.spec.input_shape}")
    return pixels[:, :, np.newaxis].astype(np.float32)


def _to_recognition(probs: np.ndarray, classes: CharClassSet, row: int) -> Recognition:
    index = int(np.argmax(probs))
    return Recognition(index, classes[index], float(probs[index]), row)


def recognize_char(crop: CharacterCrop, net: Network, classes: CharClassSet) -> Recognition:
    """Classify one crop by the argmax of the network's softmax.

    Raises:
        ShapeMismatchError: If the crop does not match the network input
    """
    probs = net.predict(_net_input(np.asarray(crop.pixels), net))
    return _to_recognition(probs, classes, crop.row)


def recognize_crops(crops: Sequence[CharacterCrop], net: Network, classes: CharClassSet) -> List[Recognition]:
    """Classify crops in one batched pass, keeping their order."""
    if not crops:
        return []
    batch = np.stack([_net_input(np.asarray(c.pixels), net) for c in crops])
    probs = net.predict(batch)
    return [_to_recognition(p, classes, c.row) for p, c in zip(probs, crops)]


def _deblur(original: np.ndarray, retry: int, config: RecognizerConfig) -> np.ndarray:
    taps = config.kernel_bank[min(retry, len(config.kernel_bank) - 1)]
    kernel = motion_kernel(taps)
    fista = config.fista.for_retry(retry)
    logger.debug(f"Deblur retry {retry}: {kernel.name}, lam={fista.lam:.3g}")
    return fista_deblur(original, kernel, fista).image.pixels.astype(np.float64)


def recognize_plate(
    plate_image: ImageLike,
    net: Network,
    classes: CharClassSet,
    table: Optional[WordMapTable] = None,
    config: Optional[RecognizerConfig] = None,
) -> PlateReading:
    """Read a plate crop.

    A plate that fails the sharpness gate is deblurred once before the first
    segmentation. While fewer than ``min_chars`` characters are found and
    retries remain, retry ``k`` deblurs the original crop with the k-th
    motion kernel of the bank and threshold ``lam * decay**k``. The attempt
    with the most characters (earliest on ties) is classified and mapped.

    Args:
        plate_image: Plate crop from the detector
        net: OCR network
        classes: Class labels of the network outputs
        table: Word map; passthrough when omitted
        config: Loop settings

    Returns:
        PlateReading; ``unreadable`` is set when no character was found
    """
    config = config or RecognizerConfig()
    segment_config = config.segment.model_copy(update={"min_chars": config.min_chars})
    table = table or WordMapTable()
    timer = StageTimer()
    original = as_array(plate_image)

    current = original
    retries = 0
    with timer.stage("sharpness"):
        sharp = sharpness_gate(original, config.sharpness_threshold)
    if not sharp and config.max_retries > 0:
        with timer.stage("deblur"):
            current = _deblur(original, 0, config)
        retries = 1

    best: Optional[SegmentationOutcome] = None
    while True:
        with timer.stage("segment"):
            outcome = segment_characters(current, segment_config)
        if best is None or outcome.char_count > best.char_count:
            best = outcome
        if outcome.char_count >= config.min_chars or retries >= config.max_retries:
            break
        logger.info(f"Found {outcome.char_count} < {config.min_chars} characters; deblur retry {retries + 1}")
        with timer.stage("deblur"):
            current = _deblur(original, retries, config)
        retries += 1

    if best.char_count == 0:
        logger.warning(f"Plate unreadable after {retries} retries")
        return PlateReading([], "", timer.timings_ms, retries, best.model, unreadable=True)

    with timer.stage("classify"):
        recognitions = recognize_crops(best.crops, net, classes)
    with timer.stage("wordmap"):
        plate_string = map_plate(recognitions, table)
    return PlateReading(recognitions, plate_string, timer.timings_ms, retries, best.model)
