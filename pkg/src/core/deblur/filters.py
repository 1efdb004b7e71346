"""Sharpness gating, blur operators and Wiener-style restoration."""
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from src.core.imaging.image import GrayImage
from src.utils.logger import get_logger
from src.utils.validators import ShapeMismatchError, ValidationError

logger = get_logger(__name__)

ImageLike = Union[GrayImage, np.ndarray]
MOTION_KERNEL_BANK = (3, 5, 9)


def as_array(image: ImageLike) -> np.ndarray:
    """Pixels of a GrayImage (or a 2-D array) as float64."""
    pixels = image.pixels if isinstance(image, GrayImage) else np.asarray(image)
    if pixels.ndim != 2 or pixels.size == 0:
        raise ShapeMismatchError(f"Expected a non-empty 2-D image, got shape {pixels.shape}")
    return pixels.astype(np.float64)


class BlurKernel:
    """Non-negative, odd-sized 2-D kernel whose taps sum to 1."""

    def __init__(self, taps: np.ndarray, name: str = "custom"):
        """Initialize kernel.

        Raises:
            ValidationError: If taps are negative, even-sized or not normalized
        """
        taps = np.atleast_2d(np.asarray(taps, dtype=np.float64))
        if taps.ndim != 2 or taps.shape[0] % 2 == 0 or taps.shape[1] % 2 == 0:
            raise ValidationError(f"Blur kernel must be 2-D with odd sides, got shape {taps.shape}")
        if np.any(taps < 0):
            raise ValidationError("Blur kernel taps must be non-negative")
        if abs(taps.sum() - 1.0) > 1e-6:
            raise ValidationError(f"Blur kernel taps sum to {taps.sum():.8f}, expected 1")
        self.taps = taps
        self.name = name

    @property
    def shape(self):  # type: ignore
        return self.taps.shape

    @property
    def is_identity(self) -> bool:
        return self.taps.size == 1

    def __repr__(self) -> str:
        return f"BlurKernel({self.name}, {self.taps.shape[0]}x{self.taps.shape[1]})"


def identity_kernel() -> BlurKernel:
    return BlurKernel(np.ones((1, 1)), name="identity")


def motion_kernel(taps: int, horizontal: bool = True) -> BlurKernel:
    """Uniform linear motion kernel of ``taps`` samples."""
    if taps < 1 or taps % 2 == 0:
        raise ValidationError(f"Motion kernel needs an odd tap count, got {taps}")
    line = np.full(taps, 1.0 / taps)
    return BlurKernel(line[np.newaxis, :] if horizontal else line[:, np.newaxis], name=f"motion{taps}")


def box_kernel(height: int, width: int) -> BlurKernel:
    """Uniform ``height x width`` box kernel."""
    return BlurKernel(np.full((height, width), 1.0 / (height * width)), name=f"box{height}x{width}")


def blur(image: ImageLike, kernel: BlurKernel) -> np.ndarray:
    """Convolve with replicate-edge boundaries."""
    return ndimage.convolve(as_array(image), kernel.taps, mode="nearest")


def blur_adjoint(residual: np.ndarray, kernel: BlurKernel) -> np.ndarray:
    """Exact adjoint of :func:`blur` (replicate padding folded back onto the edges)."""
    ph, pw = kernel.taps.shape[0] // 2, kernel.taps.shape[1] // 2
    h, w = residual.shape
    padded = np.zeros((h + 2 * ph, w + 2 * pw))
    padded[ph:ph + h, pw:pw + w] = residual
    z = ndimage.correlate(padded, kernel.taps, mode="constant")

    if ph:
        z[ph] += z[:ph].sum(axis=0)
        z[ph + h - 1] += z[ph + h:].sum(axis=0)
    z = z[ph:ph + h]
    if pw:
        z[:, pw] += z[:, :pw].sum(axis=1)
        z[:, pw + w - 1] += z[:, pw + w:].sum(axis=1)
    return z[:, pw:pw + w].copy()


def estimate_lipschitz(shape: Sequence[int], kernel: BlurKernel, iterations: int = 30, seed: int = 0) -> float:
    """Largest eigenvalue of ``K^T K`` by power iteration."""
    if kernel.is_identity:
        return 1.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(tuple(shape))
    v /= np.linalg.norm(v)
    value = 1.0
    for _ in range(iterations):
        w = blur_adjoint(blur(v, kernel), kernel)
        value = float(np.linalg.norm(w))
        if value == 0.0:
            return 1.0
        v = w / value
    return value


def sharpness(image: ImageLike) -> float:
    """Variance of the discrete Laplacian response; 0 for a constant image."""
    return float(np.var(ndimage.laplace(as_array(image), mode="nearest")))


def sharpness_gate(image: ImageLike, threshold: float) -> bool:
    """True when the image is sharp enough to skip pre-emptive deblurring."""
    return sharpness(image) >= threshold


def image_mse(a: ImageLike, b: ImageLike) -> float:
    """Mean squared pixel difference.

    Raises:
        ShapeMismatchError: If the images differ in size
    """
    pa, pb = as_array(a), as_array(b)
    if pa.shape != pb.shape:
        raise ShapeMismatchError(f"Image sizes differ: {pa.shape} vs {pb.shape}")
    return float(np.mean((pa - pb) ** 2))


class FilterCoefficients:
    """FIR taps fitted by least squares against a reference signal."""

    def __init__(
        self,
        taps: np.ndarray,
        reference: np.ndarray,
        residual: np.ndarray,
        regularized: bool = False,
    ):
        self.taps = taps
        self.reference = reference
        self.residual = residual
        self.regularized = regularized

    @property
    def tap_count(self) -> int:
        """Highest lag N; there are N + 1 coefficients a_0..a_N."""
        return len(self.taps) - 1

    @property
    def residual_power(self) -> float:
        return float(np.mean(self.residual ** 2))

    def apply(self, signal: np.ndarray) -> np.ndarray:
        """Filter output x[n] = sum_i a_i * y[n - i] (zero history before the start)."""
        return fir_filter(signal, self.taps)

    def to_dict(self) -> dict:
        return {
            "taps": self.taps.tolist(),
            "residual_power": self.residual_power,
            "regularized": self.regularized,
        }


def fir_filter(signal: np.ndarray, taps: np.ndarray) -> np.ndarray:
    signal = np.asarray(signal, dtype=np.float64)
    return np.convolve(signal, taps)[: len(signal)]


def _lag_matrix(signal: np.ndarray, lags: int) -> np.ndarray:
    rows = len(signal)
    design = np.zeros((rows, lags + 1))
    for i in range(lags + 1):
        design[i:, i] = signal[: rows - i]
    return design


def wiener_fit(
    blurred: Sequence[float],
    reference: Sequence[float],
    taps: int,
    ridge: float = 1e-8,
) -> FilterCoefficients:
    """Fit FIR coefficients minimizing the mean squared error against ``reference``.

    Solves the normal equations ``(Y^T Y) a = Y^T s`` where row n of Y holds
    ``y[n], y[n-1], ..., y[n-N]``. Rows with incomplete history are skipped.

    Args:
        blurred: Observed signal y[n]
        reference: Desired signal s[n]
        taps: Highest lag N (N >= 1)
        ridge: Relative Tikhonov weight used when the normal matrix is singular

    Returns:
        FilterCoefficients with residual e[n] = s[n] - x[n]

    Raises:
        ValidationError: On length mismatch or too-short sequences
    """
    y = np.asarray(blurred, dtype=np.float64)
    s = np.asarray(reference, dtype=np.float64)
    if taps < 1:
        raise ValidationError(f"Tap count must be >= 1, got {taps}")
    if y.shape != s.shape or y.ndim != 1:
        raise ValidationError(f"Signals must be 1-D and equal length, got {y.shape} and {s.shape}")
    if len(y) <= taps:
        raise ValidationError(f"Signals of length {len(y)} are too short for {taps} taps")

    design = _lag_matrix(y, taps)[taps:]
    target = s[taps:]
    normal = design.T @ design
    rhs = design.T @ target

    regularized = False
    if np.linalg.cond(normal) > 1e12:
        delta = ridge * max(float(np.trace(normal)) / normal.shape[0], 1.0)
        logger.warning(f"Singular normal matrix in wiener_fit; regularizing with {delta:.3g}")
        normal = normal + delta * np.eye(normal.shape[0])
        regularized = True
    coefficients = np.linalg.solve(normal, rhs)

    residual = s - fir_filter(y, coefficients)
    return FilterCoefficients(coefficients, s, residual, regularized)


def _kernel_otf(kernel: BlurKernel, shape: Sequence[int]) -> np.ndarray:
    """Kernel transfer function on an image grid, centred at the origin."""
    padded = np.zeros(tuple(shape))
    kh, kw = kernel.taps.shape
    padded[:kh, :kw] = kernel.taps
    padded = np.roll(padded, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(padded)


def wiener_deconvolve(image: ImageLike, kernel: BlurKernel, noise_power: float) -> GrayImage:
    """Frequency-domain Wiener inverse ``H* / (|H|^2 + noise_power)``.

    Frequencies where the denominator vanishes are zeroed. The result is
    clamped to [0, 1].

    Raises:
        ValidationError: If noise_power is negative
    """
    if noise_power < 0:
        raise ValidationError(f"noise_power ({noise_power}) must be >= 0")
    pixels = as_array(image)
    otf = _kernel_otf(kernel, pixels.shape)
    spectrum = np.fft.fft2(pixels)
    denominator = np.abs(otf) ** 2 + noise_power
    gain = np.divide(np.conj(otf), denominator, out=np.zeros_like(otf), where=denominator > 1e-12)
    restored = np.real(np.fft.ifft2(spectrum * gain))
    return GrayImage(restored)
