"""Data validation utilities."""
from typing import Sequence, Tuple

import numpy as np

from src.utils.exceptions import (
    BadMagicError,
    BLPnetError,
    ConfigError,
    DataError,
    DegenerateCropError,
    DimensionOverflowError,
    DivergenceError,
    DuplicateKeyError,
    FrameDecodeError,
    NonFiniteError,
    ShapeMismatchError,
    StaleActivationError,
    TruncatedFileError,
    ValidationError,
    VersionMismatchError,
    WeightFormatError,
    WordMapParseError,
)
from src.utils.logger import get_logger

logger = get_logger(__name__)

__all__ = [
    "BadMagicError",
    "BLPnetError",
    "ConfigError",
    "DataError",
    "DegenerateCropError",
    "DimensionOverflowError",
    "DivergenceError",
    "DuplicateKeyError",
    "FrameDecodeError",
    "NonFiniteError",
    "ShapeMismatchError",
    "StaleActivationError",
    "TruncatedFileError",
    "ValidationError",
    "VersionMismatchError",
    "WeightFormatError",
    "WordMapParseError",
    "validate_bbox",
    "validate_finite",
    "validate_probability",
    "validate_ratios",
    "validate_shape",
]


def validate_bbox(x_min: float, y_min: float, x_max: float, y_max: float) -> bool:
    """Validate normalized bounding-box coordinates.

    Args:
        x_min: Left edge in [0, 1]
        y_min: Top edge in [0, 1]
        x_max: Right edge in [0, 1]
        y_max: Bottom edge in [0, 1]

    Returns:
        True if valid

    Raises:
        ValidationError: If coordinates are outside [0, 1] or inverted
    """
    for name, value in (("x_min", x_min), ("y_min", y_min), ("x_max", x_max), ("y_max", y_max)):
        if not np.isfinite(value):
            raise ValidationError(f"{name} ({value}) is not finite")
        if value < 0.0 or value > 1.0:
            raise ValidationError(f"{name} ({value}) must be within [0, 1]")

    if x_min > x_max:
        raise ValidationError(f"x_min ({x_min}) cannot be greater than x_max ({x_max})")

    if y_min > y_max:
        raise ValidationError(f"y_min ({y_min}) cannot be greater than y_max ({y_max})")

    return True


def validate_probability(value: float, name: str = "value", inclusive_upper: bool = True) -> bool:
    """Validate that a value lies in [0, 1] (or [0, 1) when not inclusive).

    Raises:
        ValidationError: If out of range
    """
    if not np.isfinite(value) or value < 0.0:
        raise ValidationError(f"{name} ({value}) must be a finite value >= 0")
    if inclusive_upper and value > 1.0:
        raise ValidationError(f"{name} ({value}) must be <= 1")
    if not inclusive_upper and value >= 1.0:
        raise ValidationError(f"{name} ({value}) must be < 1")
    return True


def validate_ratios(ratios: Sequence[float], tolerance: float = 1e-6) -> bool:
    """Validate dataset split ratios.

    Args:
        ratios: Fractions for train/validation/test
        tolerance: Allowed deviation of the sum from 1

    Returns:
        True if valid

    Raises:
        ValidationError: If any ratio is negative or they do not sum to 1
    """
    if len(ratios) == 0:
        raise ValidationError("At least one split ratio is required")

    if any(r < 0 for r in ratios):
        raise ValidationError(f"Split ratios {list(ratios)} cannot be negative")

    total = float(sum(ratios))
    if abs(total - 1.0) > tolerance:
        raise ValidationError(f"Split ratios {list(ratios)} sum to {total:.6f}, expected 1")

    return True


def validate_finite(array: np.ndarray, what: str = "tensor", layer_index: int = -1) -> bool:
    """Validate that an array contains only finite values.

    Raises:
        NonFiniteError: If any element is NaN or infinite
    """
    if not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        where = f" at layer {layer_index}" if layer_index >= 0 else ""
        logger.debug(f"Non-finite check failed for {what}{where}: {bad} bad values")
        raise NonFiniteError(f"{what}{where} contains {bad} non-finite values", layer_index)
    return True


def validate_shape(actual: Tuple[int, ...], expected: Tuple[int, ...], what: str = "tensor") -> bool:
    """Validate an array shape; ``-1`` in ``expected`` matches any size.

    Raises:
        ShapeMismatchError: If ranks or dimensions differ
    """
    if len(actual) != len(expected) or any(
        e != -1 and a != e for a, e in zip(actual, expected)
    ):
        raise ShapeMismatchError(f"{what} shape {tuple(actual)} does not match {tuple(expected)}")
    return True
