"""Procedural glyphs, plate cards and road scenes used as desk-scale data.

Glyphs are drawn from a fixed set of line strokes on a unit box. Every glyph
contains the left spine; the remaining eight strokes are switched on by the
bits of a glyph code. The catalog picks 60 connected codes that differ in at
least two strokes where possible.
"""
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from src.core.imaging.image import GrayImage
from src.core.segmentation.components import normalize_crop
from src.utils.logger import get_logger
from src.utils.validators import ValidationError

logger = get_logger(__name__)

# (x0, y0, x1, y1) on the unit glyph box, y pointing down
SPINE = (0.15, 0.1, 0.15, 0.9)
STROKES: Tuple[Tuple[float, float, float, float], ...] = (
    (0.15, 0.1, 0.85, 0.1),  # top bar
    (0.15, 0.5, 0.85, 0.5),  # middle bar
    (0.15, 0.9, 0.85, 0.9),  # bottom bar
    (0.85, 0.1, 0.85, 0.5),  # right upper vertical
    (0.85, 0.5, 0.85, 0.9),  # right lower vertical
    (0.15, 0.1, 0.85, 0.9),  # diagonal
    (0.5, 0.1, 0.5, 0.5),  # centre upper vertical
    (0.85, 0.1, 0.15, 0.9),  # anti-diagonal
)
MIDDLE_BAR = 1
CATALOG_SIZE = 60
STROKE_WIDTH = 0.12
GLYPH_ASPECT = 0.75
CARD_BACKGROUND = 0.9
CARD_INK = 0.1


def _segment_distance(xx: np.ndarray, yy: np.ndarray, segment: Sequence[float]) -> np.ndarray:
    x0, y0, x1, y1 = segment
    dx, dy = x1 - x0, y1 - y0
    length_sq = dx * dx + dy * dy
    t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / length_sq, 0.0, 1.0) if length_sq > 0 else 0.0
    return np.hypot(xx - (x0 + t * dx), yy - (y0 + t * dy))


def _code_strokes(code: int) -> List[Tuple[float, float, float, float]]:
    return [SPINE] + [stroke for bit, stroke in enumerate(STROKES) if code >> bit & 1]


def glyph_bitmap(
    code: int,
    height: int,
    stroke_width: float = STROKE_WIDTH,
    rng: Optional[np.random.Generator] = None,
    jitter: float = 0.0,
) -> np.ndarray:
    """Draw a glyph code as an ink-tight boolean bitmap.

    Args:
        code: Stroke bit mask (bit i switches on ``STROKES[i]``)
        height: Glyph box height in pixels; the box is ``0.75 * height`` wide
        stroke_width: Stroke thickness as a fraction of the height
        rng: Generator for endpoint jitter
        jitter: Maximum endpoint displacement as a fraction of the box

    Returns:
        Boolean array cropped to the inked rows and columns
    """
    if height < 4:
        raise ValidationError(f"Glyph height must be >= 4, got {height}")
    width = max(int(round(GLYPH_ASPECT * height)), 3)
    yy, xx = np.mgrid[:height, :width]
    xx = (xx + 0.5) / width
    yy = (yy + 0.5) / height

    half = 0.5 * stroke_width * height
    ink = np.zeros((height, width), dtype=bool)
    for segment in _code_strokes(code):
        if rng is not None and jitter > 0:
            segment = tuple(np.asarray(segment) + rng.uniform(-jitter, jitter, size=4))
        # distances in pixels: scale x by the box width and y by its height
        x0, y0, x1, y1 = segment
        scaled = (x0 * width, y0 * height, x1 * width, y1 * height)
        ink |= _segment_distance(xx * width, yy * height, scaled) <= half

    rows = np.flatnonzero(ink.any(axis=1))
    cols = np.flatnonzero(ink.any(axis=0))
    return ink[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]


def _connected(code: int) -> bool:
    _, count = ndimage.label(glyph_bitmap(code, 32), structure=np.ones((3, 3)))
    return count == 1


@lru_cache(maxsize=1)
def glyph_catalog(size: int = CATALOG_SIZE) -> Tuple[int, ...]:
    """Glyph codes of the class inventory, in class-index order.

    Codes are visited by stroke count, then value. A code joins when its
    glyph is one connected blob and it differs from every accepted code in
    at least two strokes; a second pass relaxes the distance to one.
    """
    candidates = sorted(range(1, 1 << len(STROKES)), key=lambda c: (bin(c).count("1"), c))
    candidates = [c for c in candidates if _connected(c)]
    chosen: List[int] = []
    for min_distance in (2, 1):
        for code in candidates:
            if len(chosen) == size:
                break
            if code in chosen:
                continue
            if all(bin(code ^ other).count("1") >= min_distance for other in chosen):
                chosen.append(code)
    if len(chosen) < size:
        raise ValidationError(f"Only {len(chosen)} distinct connected glyphs available, need {size}")
    return tuple(chosen)


def glyph_code(class_index: int) -> int:
    catalog = glyph_catalog()
    if not 0 <= class_index < len(catalog):
        raise ValidationError(f"Class index {class_index} outside [0, {len(catalog)})")
    return catalog[class_index]


def plate_classes(count: Optional[int] = None) -> List[int]:
    """Class indices whose glyph carries the middle bar, in catalog order."""
    classes = [i for i, code in enumerate(glyph_catalog()) if code >> MIDDLE_BAR & 1]
    return classes if count is None else classes[:count]


def render_glyph(
    class_index: int,
    size: int,
    rng: Optional[np.random.Generator] = None,
    height: int = 32,
    jitter: float = 0.03,
) -> np.ndarray:
    """Render one training glyph exactly as segmentation would crop it.

    The ink-tight bitmap goes through the same square-pad-and-resize step as
    plate crops, so training and inference inputs share one distribution.
    ``rng`` adds stroke-endpoint and thickness jitter; without it the glyph
    is the class prototype.
    """
    width = STROKE_WIDTH
    if rng is not None:
        width = STROKE_WIDTH * rng.uniform(0.85, 1.2)
    bitmap = glyph_bitmap(glyph_code(class_index), height, width, rng, jitter if rng is not None else 0.0)
    return normalize_crop(bitmap.astype(np.float32), size)


class PlateCard:
    """Rendered plate with its ground truth."""

    def __init__(self, image: GrayImage, truth_mask: np.ndarray, boxes: List[Tuple[int, int, int, int]], classes: List[int]):
        self.image = image
        self.truth_mask = truth_mask
        self.boxes = boxes
        self.classes = classes

    @property
    def char_count(self) -> int:
        return len(self.classes)


def render_plate(
    classes: Sequence[int],
    glyph_height: int = 30,
    gap: int = 3,
    margin: int = 8,
    line_break: Optional[int] = None,
    background: float = CARD_BACKGROUND,
    ink: float = CARD_INK,
    rotation: float = 0.0,
) -> PlateCard:
    """Render dark glyphs on a light card.

    Glyph ink boxes are separated by exactly ``gap`` pixels. With
    ``line_break`` the classes from that index on form a second line.

    Args:
        classes: Class index per character, in reading order
        glyph_height: Glyph box height in pixels
        gap: Horizontal ink gap between neighbouring glyphs
        margin: Card border around the text block
        line_break: Index of the first bottom-line character
        background: Card intensity
        ink: Glyph intensity
        rotation: Card rotation in degrees (counter-clockwise)

    Returns:
        PlateCard with the image, the glyph mask and per-character
        ``(y0, x0, y1, x1)`` boxes (before rotation)
    """
    bitmaps = [glyph_bitmap(glyph_code(c), glyph_height) for c in classes]
    split = len(bitmaps) if line_break is None else line_break
    lines = [bitmaps[:split], bitmaps[split:]] if 0 < split < len(bitmaps) else [bitmaps]
    lines = [line for line in lines if line]

    line_widths = [sum(b.shape[1] for b in line) + gap * (len(line) - 1) for line in lines]
    n_lines = max(len(lines), 1)
    height = 2 * margin + n_lines * glyph_height + (n_lines - 1) * margin
    width = 2 * margin + (max(line_widths) if line_widths else glyph_height)
    truth = np.zeros((height, width), dtype=bool)
    boxes: List[Tuple[int, int, int, int]] = []

    for row, line in enumerate(lines):
        x = margin + (max(line_widths) - line_widths[row]) // 2
        top = margin + row * (glyph_height + margin)
        for bitmap in line:
            h, w = bitmap.shape
            y = top + (glyph_height - h) // 2
            truth[y:y + h, x:x + w] |= bitmap
            boxes.append((y, x, y + h, x + w))
            x += w + gap

    pixels = np.where(truth, ink, background).astype(np.float64)
    if rotation:
        pixels = ndimage.rotate(pixels, rotation, reshape=False, order=1, mode="nearest")
        truth = ndimage.rotate(truth.astype(np.float64), rotation, reshape=False, order=1, mode="constant") > 0.5
    return PlateCard(GrayImage(pixels), truth, boxes, list(classes))


def bias_field_card(height: int = 48, width: int = 160, low: float = 0.3, high: float = 1.0) -> Tuple[GrayImage, np.ndarray]:
    """Text card multiplied by a left-to-right linear illumination ramp.

    Returns:
        Tuple ``(image, glyph_mask)``
    """
    classes = plate_classes(5)
    card = render_plate(classes, glyph_height=30, gap=6, background=0.9, ink=0.3)
    base = card.image.pixels.astype(np.float64)
    base = ndimage.zoom(base, (height / base.shape[0], width / base.shape[1]), order=0, mode="nearest")
    mask = ndimage.zoom(card.truth_mask.astype(np.uint8), (height / card.truth_mask.shape[0], width / card.truth_mask.shape[1]), order=0) > 0
    ramp = np.linspace(low, high, width)[np.newaxis, :]
    return GrayImage(base * ramp), mask


class SceneTruth:
    """Ground truth of a rendered frame (normalized boxes)."""

    def __init__(
        self,
        vehicle_bbox: Optional[Tuple[float, float, float, float]],
        plate_bbox: Optional[Tuple[float, float, float, float]],
        classes: List[int],
    ):
        self.vehicle_bbox = vehicle_bbox
        self.plate_bbox = plate_bbox
        self.classes = classes

    @property
    def has_vehicle(self) -> bool:
        return self.vehicle_bbox is not None


ROAD_LEVEL = 0.5
VEHICLE_LEVEL = 0.2


def render_frame(
    classes: Optional[Sequence[int]],
    rng: np.random.Generator,
    size: Tuple[int, int] = (240, 320),
    glyph_height: int = 30,
) -> Tuple[GrayImage, SceneTruth]:
    """Render a road scene, optionally with a vehicle carrying a plate.

    The vehicle is a dark block on a mid-gray textured road; the plate card
    sits in its lower half. ``classes=None`` renders an empty road.

    Returns:
        Tuple ``(frame, truth)``; the vehicle box is normalized to the frame
        and the plate box to the vehicle crop
    """
    h, w = size
    frame = np.clip(ROAD_LEVEL + rng.normal(0.0, 0.02, size=(h, w)), 0.35, 0.65)
    if not classes:
        return GrayImage(frame), SceneTruth(None, None, [])

    card = render_plate(classes, glyph_height=glyph_height)
    ch, cw = card.image.shape
    vh = min(h - 4, ch * 2 + int(rng.integers(10, 30)))
    vw = min(w - 4, cw + int(rng.integers(30, 60)))
    if ch + 4 > vh or cw + 4 > vw:
        raise ValidationError(f"Plate card {cw}x{ch} does not fit a {w}x{h} frame")
    vy = int(rng.integers(0, h - vh + 1))
    vx = int(rng.integers(0, w - vw + 1))
    frame[vy:vy + vh, vx:vx + vw] = VEHICLE_LEVEL

    py = vh - ch - int(rng.integers(2, max(3, (vh - ch) // 2)))
    px = (vw - cw) // 2 + int(rng.integers(-((vw - cw) // 4), (vw - cw) // 4 + 1))
    frame[vy + py:vy + py + ch, vx + px:vx + px + cw] = card.image.pixels

    vehicle = (vx / w, vy / h, (vx + vw) / w, (vy + vh) / h)
    plate = (px / vw, py / vh, (px + cw) / vw, (py + ch) / vh)
    return GrayImage(frame), SceneTruth(vehicle, plate, list(classes))
