"""Connected-component extraction and reading-order character crops."""
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from src.core.imaging.image import resize
from src.utils.logger import get_logger
from src.utils.validators import ShapeMismatchError, ValidationError

logger = get_logger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
MIN_AREA_FRACTION = 0.005
MAX_AREA_FRACTION = 0.30
CROP_MARGIN = 0.1


class Region:
    """One connected component of a binary mask."""

    def __init__(self, label: int, bbox: Tuple[int, int, int, int], area: int, centroid: Tuple[float, float]):
        """Initialize region.

        Args:
            label: Label value in the component label image
            bbox: ``(y0, x0, y1, x1)`` with exclusive upper bounds
            area: Pixel count
            centroid: ``(row, col)`` centre of mass
        """
        self.label = label
        self.bbox = bbox
        self.area = area
        self.centroid = centroid

    @property
    def height(self) -> int:
        return self.bbox[2] - self.bbox[0]

    @property
    def width(self) -> int:
        return self.bbox[3] - self.bbox[1]

    @property
    def center_y(self) -> float:
        return 0.5 * (self.bbox[0] + self.bbox[2])

    @property
    def center_x(self) -> float:
        return 0.5 * (self.bbox[1] + self.bbox[3])

    def to_dict(self) -> dict:
        return {"label": self.label, "bbox": list(self.bbox), "area": self.area}

    def __repr__(self) -> str:
        return f"Region(label={self.label}, bbox={self.bbox}, area={self.area})"


class Components:
    """Label image plus the regions that survived area filtering."""

    def __init__(self, labels: np.ndarray, regions: List[Region], rejected: int = 0):
        self.labels = labels
        self.regions = regions
        self.rejected = rejected

    def __len__(self) -> int:
        return len(self.regions)

    def mask_of(self, region: Region) -> np.ndarray:
        """Boolean patch of one region inside its bounding box."""
        y0, x0, y1, x1 = region.bbox
        return self.labels[y0:y1, x0:x1] == region.label


def connected_components(
    mask: np.ndarray,
    min_area_fraction: float = MIN_AREA_FRACTION,
    max_area_fraction: float = MAX_AREA_FRACTION,
) -> Components:
    """Label a binary mask with 8-connectivity and filter regions by area.

    Area limits are fractions of the mask size; a region is kept when
    ``min_area <= area <= max_area``.

    Args:
        mask: 2-D boolean mask
        min_area_fraction: Smallest kept area relative to the mask size
        max_area_fraction: Largest kept area relative to the mask size

    Returns:
        Components with regions sorted by label
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ShapeMismatchError(f"Component labeling needs a 2-D mask, got shape {mask.shape}")
    if not 0.0 <= min_area_fraction <= max_area_fraction:
        raise ValidationError(f"Invalid area limits [{min_area_fraction}, {max_area_fraction}]")

    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return Components(labels, [])

    index = np.arange(1, count + 1)
    areas = ndimage.sum_labels(mask, labels, index).astype(int)
    centroids = ndimage.center_of_mass(mask, labels, index)
    slices = ndimage.find_objects(labels)

    min_area = min_area_fraction * mask.size
    max_area = max_area_fraction * mask.size
    regions: List[Region] = []
    for label, area, centroid, box in zip(index, areas, centroids, slices):
        if not min_area <= area <= max_area:
            continue
        bbox = (box[0].start, box[1].start, box[0].stop, box[1].stop)
        regions.append(Region(int(label), bbox, int(area), (float(centroid[0]), float(centroid[1]))))

    rejected = count - len(regions)
    if rejected:
        logger.debug(f"Dropped {rejected} of {count} components outside area [{min_area:.0f}, {max_area:.0f}]")
    return Components(labels, regions, rejected)


def normalize_crop(patch: np.ndarray, target_size: int, margin: float = CROP_MARGIN) -> np.ndarray:
    """Centre a patch on a square canvas with a margin, then resize bilinearly.

    Args:
        patch: 2-D array (ink = high values)
        target_size: Output side length
        margin: Border added on each side, as a fraction of the longer side

    Returns:
        ``target_size x target_size`` float32 array
    """
    patch = np.asarray(patch, dtype=np.float32)
    if patch.ndim != 2 or patch.size == 0:
        raise ShapeMismatchError(f"Crop patch must be a non-empty 2-D array, got shape {patch.shape}")
    if target_size < 1:
        raise ValidationError(f"target_size must be >= 1, got {target_size}")
    h, w = patch.shape
    side = max(h, w)
    pad = int(round(margin * side))
    canvas = np.zeros((side + 2 * pad, side + 2 * pad), dtype=np.float32)
    top = pad + (side - h) // 2
    left = pad + (side - w) // 2
    canvas[top:top + h, left:left + w] = patch
    return resize(canvas, (target_size, target_size))


class CharacterCrop:
    """One character patch in plate reading order."""

    def __init__(self, pixels: np.ndarray, bbox: Tuple[int, int, int, int], index: int, row: int):
        self.pixels = pixels
        self.bbox = bbox
        self.index = index
        self.row = row

    def to_dict(self) -> dict:
        return {"index": self.index, "row": self.row, "bbox": list(self.bbox)}

    def __repr__(self) -> str:
        return f"CharacterCrop(index={self.index}, row={self.row}, bbox={self.bbox})"


def assign_rows(regions: List[Region], max_iter: int = 20) -> List[int]:
    """Cluster regions into at most two text lines by vertical centre.

    Two lines are used when the spread of centres exceeds half the median
    region height; the 1-D k-means then starts from the extreme centres.

    Returns:
        Row index per region (0 = top line)
    """
    if not regions:
        return []
    centers = np.array([r.center_y for r in regions])
    median_height = float(np.median([r.height for r in regions]))
    if len(regions) < 2 or centers.max() - centers.min() <= 0.5 * median_height:
        return [0] * len(regions)

    means = np.array([centers.min(), centers.max()])
    assignment = np.zeros(len(regions), dtype=int)
    for iteration in range(max_iter):
        new_assignment = np.argmin(np.abs(centers[:, np.newaxis] - means[np.newaxis, :]), axis=1)
        if np.array_equal(new_assignment, assignment) and iteration > 0:
            break
        assignment = new_assignment
        for k in range(2):
            if np.any(assignment == k):
                means[k] = centers[assignment == k].mean()
    if means[0] > means[1]:
        assignment = 1 - assignment
    return [int(a) for a in assignment]


def order_and_crop(
    image: Optional[np.ndarray],
    components: Components,
    target_size: int = 64,
) -> List[CharacterCrop]:
    """Sort regions top line first, then left to right, and crop each one.

    Crops are the region's own binary mask (ink = 1, background = 0)
    resized to the target, never the plate intensities, so neighbouring
    glyphs that intrude into a bounding box are left out. ``image`` is only
    checked against the label image's shape. A classifier reading these
    crops must be trained on mask-like glyphs.

    Args:
        image: Plate pixels the mask was computed from, or None
        components: Output of :func:`connected_components`
        target_size: Side length of every crop

    Returns:
        CharacterCrops with indices 0..n-1 in reading order
    """
    if image is not None and np.asarray(image).shape != components.labels.shape:
        raise ShapeMismatchError(f"Image {np.asarray(image).shape} vs labels {components.labels.shape}")
    regions = components.regions
    rows = assign_rows(regions)
    order = sorted(range(len(regions)), key=lambda i: (rows[i], regions[i].center_x, regions[i].center_y))

    crops: List[CharacterCrop] = []
    for index, i in enumerate(order):
        region = regions[i]
        patch = components.mask_of(region).astype(np.float32)
        crops.append(CharacterCrop(normalize_crop(patch, target_size), region.bbox, index, rows[i]))
    return crops
