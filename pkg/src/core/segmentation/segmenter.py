"""Character segmentation driver: Chan-Vese first, RSF when CV finds too few glyphs."""
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from src.core.deblur.filters import ImageLike, as_array
from src.core.segmentation.components import (
    MAX_AREA_FRACTION,
    MIN_AREA_FRACTION,
    CharacterCrop,
    Components,
    connected_components,
    order_and_crop,
)
from src.core.segmentation.level_sets import (
    CvParams,
    RsfParams,
    SegmentationModel,
    SegmentationResult,
    chan_vese,
    rsf,
)
from src.utils.logger import get_logger

logger = get_logger(__name__)


class SegmentConfig(BaseModel):
    """Settings of :func:`segment_characters`."""

    min_chars: int = Field(default=4, ge=1)
    target_size: int = Field(default=64, ge=4)
    min_area_fraction: float = Field(default=MIN_AREA_FRACTION, ge=0.0, le=1.0)
    max_area_fraction: float = Field(default=MAX_AREA_FRACTION, ge=0.0, le=1.0)
    rsf_fallback: bool = True
    force_model: Optional[SegmentationModel] = None
    cv: CvParams = Field(default_factory=CvParams)
    rsf: RsfParams = Field(default_factory=RsfParams)


def glyph_mask(result: SegmentationResult) -> np.ndarray:
    """Pick the glyph phase of a two-phase result: the one with the smaller area."""
    mask = result.mask
    if result.degenerate:
        return np.zeros_like(mask, dtype=bool)
    return mask if mask.sum() <= mask.size / 2 else ~mask


class SegmentationOutcome:
    """Crops of one plate and the model that produced them."""

    def __init__(
        self,
        model: Optional[SegmentationModel],
        crops: List[CharacterCrop],
        components: Optional[Components],
        results: List[SegmentationResult],
    ):
        self.model = model
        self.crops = crops
        self.components = components
        self.results = results

    @property
    def char_count(self) -> int:
        return len(self.crops)

    @property
    def fallback_used(self) -> bool:
        return len(self.results) > 1

    @property
    def mask(self) -> Optional[np.ndarray]:
        if self.components is None:
            return None
        return self.components.labels > 0

    def to_dict(self) -> dict:
        return {
            "model": self.model.value if self.model else None,
            "char_count": self.char_count,
            "fallback_used": self.fallback_used,
        }


def _extract(result: SegmentationResult, config: SegmentConfig) -> Components:
    return connected_components(glyph_mask(result), config.min_area_fraction, config.max_area_fraction)


def segment_characters(image: ImageLike, config: Optional[SegmentConfig] = None) -> SegmentationOutcome:
    """Segment a plate into ordered character crops.

    Chan-Vese runs first. If it yields fewer than ``min_chars`` in-range
    components, RSF runs too and the model with more components wins (ties
    keep CV). ``force_model`` runs only the named model.

    Args:
        image: Plate crop
        config: Segmentation settings

    Returns:
        SegmentationOutcome; ``crops`` is empty for a blank plate
    """
    config = config or SegmentConfig()
    pixels = as_array(image)

    if config.force_model is SegmentationModel.RSF:
        result = rsf(pixels, config.rsf)
        components = _extract(result, config)
        return SegmentationOutcome(SegmentationModel.RSF, order_and_crop(pixels, components, config.target_size), components, [result])

    results = [chan_vese(pixels, config.cv)]
    best_model = SegmentationModel.CV
    best = _extract(results[0], config)

    if len(best) < config.min_chars and config.rsf_fallback and config.force_model is None and not results[0].degenerate:
        logger.warning(f"CV found {len(best)} < {config.min_chars} characters; falling back to RSF")
        results.append(rsf(pixels, config.rsf))
        candidate = _extract(results[1], config)
        if len(candidate) > len(best):
            best, best_model = candidate, SegmentationModel.RSF

    crops = order_and_crop(pixels, best, config.target_size)
    logger.debug(f"Segmented {len(crops)} characters with {best_model.value}")
    return SegmentationOutcome(best_model, crops, best, results)
