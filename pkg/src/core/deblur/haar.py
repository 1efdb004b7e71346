"""Haar-domain deblurring: Landweber steps interleaved with wavelet shrinkage."""
from typing import Tuple

import numpy as np

from src.core.deblur.filters import (
    BlurKernel,
    ImageLike,
    as_array,
    blur,
    blur_adjoint,
    estimate_lipschitz,
    image_mse,
)
from src.core.imaging.image import GrayImage
from src.utils.logger import get_logger
from src.utils.validators import ShapeMismatchError, ValidationError

logger = get_logger(__name__)

SQRT2 = np.sqrt(2.0)


def haar2(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Single-level orthonormal 2-D Haar transform of an even-sized array.

    Returns:
        Tuple ``(approx, horizontal, vertical, diagonal)``
    """
    if x.shape[0] % 2 or x.shape[1] % 2:
        raise ShapeMismatchError(f"Haar transform needs even dimensions, got {x.shape}")
    lo = (x[:, 0::2] + x[:, 1::2]) / SQRT2
    hi = (x[:, 0::2] - x[:, 1::2]) / SQRT2
    ll = (lo[0::2] + lo[1::2]) / SQRT2
    lh = (lo[0::2] - lo[1::2]) / SQRT2
    hl = (hi[0::2] + hi[1::2]) / SQRT2
    hh = (hi[0::2] - hi[1::2]) / SQRT2
    return ll, lh, hl, hh


def ihaar2(ll: np.ndarray, lh: np.ndarray, hl: np.ndarray, hh: np.ndarray) -> np.ndarray:
    """Inverse of :func:`haar2`."""
    h2, w2 = ll.shape
    lo = np.empty((2 * h2, w2))
    hi = np.empty((2 * h2, w2))
    lo[0::2] = (ll + lh) / SQRT2
    lo[1::2] = (ll - lh) / SQRT2
    hi[0::2] = (hl + hh) / SQRT2
    hi[1::2] = (hl - hh) / SQRT2
    x = np.empty((2 * h2, 2 * w2))
    x[:, 0::2] = (lo + hi) / SQRT2
    x[:, 1::2] = (lo - hi) / SQRT2
    return x


def soft_threshold(x: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def _shrink_details(x: np.ndarray, threshold: float) -> np.ndarray:
    h, w = x.shape
    padded = np.pad(x, ((0, h % 2), (0, w % 2)), mode="edge")
    ll, lh, hl, hh = haar2(padded)
    out = ihaar2(ll, soft_threshold(lh, threshold), soft_threshold(hl, threshold), soft_threshold(hh, threshold))
    return out[:h, :w]


def _detail_l1(x: np.ndarray) -> float:
    h, w = x.shape
    padded = np.pad(x, ((0, h % 2), (0, w % 2)), mode="edge")
    _, lh, hl, hh = haar2(padded)
    return float(np.abs(lh).sum() + np.abs(hl).sum() + np.abs(hh).sum())


class HaarResult:
    """Outcome of :func:`haar_deblur`."""

    def __init__(self, image: GrayImage, mse: float, iterations: int, converged: bool):
        self.image = image
        self.mse = mse
        self.iterations = iterations
        self.converged = converged


def haar_deblur(
    image: ImageLike,
    kernel: BlurKernel,
    threshold: float,
    max_iter: int = 100,
    tol: float = 1e-5,
) -> HaarResult:
    """Deblur by alternating a Landweber step with Haar detail shrinkage.

    Args:
        image: Blurred image (both sides >= 2)
        kernel: Blur kernel
        threshold: Soft threshold applied to detail coefficients
        max_iter: Iteration budget
        tol: Relative change below which the iteration stops

    Returns:
        HaarResult with the best iterate, its MSE against the input and a
        convergence flag
    """
    y = as_array(image)
    if min(y.shape) < 2:
        raise ShapeMismatchError(f"haar_deblur needs both sides >= 2, got {y.shape}")
    if threshold < 0:
        raise ValidationError(f"threshold ({threshold}) must be >= 0")

    step = 1.0 / estimate_lipschitz(y.shape, kernel)
    x = y.copy()

    def objective(z: np.ndarray) -> float:
        return 0.5 * float(np.sum((blur(z, kernel) - y) ** 2)) + threshold * _detail_l1(z)

    best, best_value = x.copy(), objective(x)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        landweber = x + step * blur_adjoint(y - blur(x, kernel), kernel)
        x_new = np.clip(_shrink_details(landweber, threshold * step), 0.0, 1.0)
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), 1e-12)
        x = x_new
        value = objective(x)
        if value < best_value:
            best, best_value = x.copy(), value
        if change < tol:
            converged = True
            break

    if not converged:
        logger.debug(f"haar_deblur did not converge in {max_iter} iterations; returning best iterate")
    restored = GrayImage(best)
    return HaarResult(restored, image_mse(restored, y), iterations, converged)
