"""Grayscale image type, Netpbm/PNG codecs and resampling helpers."""
import io
import re
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from src.utils.logger import get_logger
from src.utils.validators import FrameDecodeError, ShapeMismatchError, ValidationError

logger = get_logger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class GrayImage:
    """Row-major grayscale image with values in [0, 1]."""

    def __init__(self, pixels: np.ndarray, source: Optional[Path] = None):
        """Initialize image.

        Args:
            pixels: 2-D array; values are clipped into [0, 1] and stored as float32
            source: File the image was decoded from, if any

        Raises:
            ShapeMismatchError: If pixels is not 2-D or is empty
        """
        array = np.asarray(pixels, dtype=np.float32)
        if array.ndim != 2 or array.size == 0:
            raise ShapeMismatchError(f"GrayImage needs a non-empty 2-D array, got shape {array.shape}")
        self.pixels = np.clip(array, 0.0, 1.0)
        self.source = source

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def copy(self) -> "GrayImage":
        return GrayImage(self.pixels.copy(), self.source)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self) -> str:
        return f"GrayImage({self.width}x{self.height})"


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Convert an ``[h, w, 3]`` colour array in [0, 1] to luminance."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim == 2:
        return pixels.astype(np.float32)
    if pixels.ndim != 3 or pixels.shape[2] not in (3, 4):
        raise ShapeMismatchError(f"Expected [h, w, 3] colour array, got shape {pixels.shape}")
    return (pixels[..., :3] @ LUMA_WEIGHTS).astype(np.float32)


# ---------------------------------------------------------------------------
# Codecs

_TOKEN = re.compile(rb"(?:#[^\n]*\n|\s)*([^\s#]+)")


def _netpbm_header(data: bytes) -> Tuple[bytes, int, int, int, int]:
    tokens = []
    offset = 0
    while len(tokens) < 4:
        match = _TOKEN.match(data, offset)
        if match is None:
            raise FrameDecodeError("Truncated Netpbm header")
        tokens.append(match.group(1))
        offset = match.end()
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as e:
        raise FrameDecodeError(f"Malformed Netpbm header: {e}") from e
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FrameDecodeError(f"Invalid Netpbm dimensions {width}x{height} maxval {maxval}")
    # single whitespace byte separates header from raster
    return magic, width, height, maxval, offset + 1


def decode_netpbm(data: bytes) -> np.ndarray:
    """Decode P2/P3/P5/P6 into a float array in [0, 1] (``[h, w]`` or ``[h, w, 3]``)."""
    magic, width, height, maxval, offset = _netpbm_header(data)
    channels = {b"P2": 1, b"P5": 1, b"P3": 3, b"P6": 3}.get(magic)
    if channels is None:
        raise FrameDecodeError(f"Unsupported Netpbm magic {magic!r}")
    count = width * height * channels

    if magic in (b"P2", b"P3"):
        try:
            values = np.array(data[offset - 1:].split()[:count], dtype=np.float64)
        except ValueError as e:
            raise FrameDecodeError(f"Non-numeric sample in ASCII Netpbm raster: {e}") from e
    else:
        dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
        raster = data[offset:offset + count * dtype.itemsize]
        if len(raster) < count * dtype.itemsize:
            raise FrameDecodeError(f"Netpbm raster truncated: {len(raster)} of {count * dtype.itemsize} bytes")
        values = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    if values.size != count:
        raise FrameDecodeError(f"Netpbm raster has {values.size} values, expected {count}")

    shape = (height, width) if channels == 1 else (height, width, 3)
    return (values / maxval).reshape(shape).astype(np.float32)


def decode_png(data: bytes) -> np.ndarray:
    """Decode PNG bytes through Pillow into a float array in [0, 1]."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            array = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise FrameDecodeError(f"Cannot decode PNG: {e}") from e
    return array


def decode_image(data: bytes, source: Optional[Path] = None) -> GrayImage:
    """Decode PGM, PPM or PNG bytes into a GrayImage.

    Raises:
        FrameDecodeError: If the bytes are not a supported, well-formed image
    """
    if data.startswith(PNG_SIGNATURE):
        array = decode_png(data)
    elif data[:2] in (b"P2", b"P3", b"P5", b"P6"):
        array = decode_netpbm(data)
    else:
        raise FrameDecodeError(f"Unrecognized image format (leading bytes {data[:4]!r})")
    return GrayImage(to_gray(array), source)


def read_image(path: Union[str, Path]) -> GrayImage:
    """Read and decode an image file.

    Raises:
        FrameDecodeError: If the file cannot be read or decoded
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FrameDecodeError(f"Cannot read '{path}': {e}") from e
    return decode_image(data, source=path)


def split_netpbm_stream(data: bytes) -> List[bytes]:
    """Cut a file of concatenated binary PGM/PPM frames into one chunk per frame.

    A short final chunk is kept, so decoding it reports the truncation.

    Raises:
        FrameDecodeError: If a header is malformed or not P5/P6
    """
    chunks: List[bytes] = []
    offset = 0
    while offset < len(data):
        if data[offset:offset + 1].isspace():
            offset += 1
            continue
        magic, width, height, maxval, start = _netpbm_header(data[offset:])
        if magic not in (b"P5", b"P6"):
            raise FrameDecodeError(f"Frame stream holds {magic!r}; only binary P5/P6 frames can be concatenated")
        channels = 1 if magic == b"P5" else 3
        end = offset + start + width * height * channels * (1 if maxval < 256 else 2)
        chunks.append(data[offset:end])
        offset = end
    return chunks


def encode_pgm(pixels: np.ndarray, binary: bool = True) -> bytes:
    """Encode a 2-D array in [0, 1] (or a boolean mask) as 8-bit PGM."""
    array = np.asarray(pixels)
    if array.ndim != 2:
        raise ShapeMismatchError(f"PGM needs a 2-D array, got shape {array.shape}")
    values = np.round(np.clip(array.astype(np.float64), 0.0, 1.0) * 255).astype(np.uint8)
    height, width = values.shape
    if binary:
        return f"P5\n{width} {height}\n255\n".encode("ascii") + values.tobytes()
    body = "\n".join(" ".join(str(v) for v in row) for row in values)
    return f"P2\n{width} {height}\n255\n{body}\n".encode("ascii")


def encode_ppm(pixels: np.ndarray) -> bytes:
    """Encode an ``[h, w, 3]`` array in [0, 1] as binary PPM."""
    array = np.asarray(pixels)
    if array.ndim != 3 or array.shape[2] != 3:
        raise ShapeMismatchError(f"PPM needs an [h, w, 3] array, got shape {array.shape}")
    values = np.round(np.clip(array.astype(np.float64), 0.0, 1.0) * 255).astype(np.uint8)
    return f"P6\n{array.shape[1]} {array.shape[0]}\n255\n".encode("ascii") + values.tobytes()


def write_pgm(path: Union[str, Path], pixels: Union[np.ndarray, GrayImage]) -> Path:
    """Write an image or binary mask as P5 PGM."""
    path = Path(path)
    array = pixels.pixels if isinstance(pixels, GrayImage) else pixels
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_pgm(array))
    return path


# ---------------------------------------------------------------------------
# Resampling and metrics


def resize(pixels: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a 2-D array to exactly ``shape`` (corner-aligned grid)."""
    array = np.asarray(pixels, dtype=np.float32)
    out_h, out_w = int(shape[0]), int(shape[1])
    if out_h < 1 or out_w < 1:
        raise ValidationError(f"Target shape {shape} must be positive")
    in_h, in_w = array.shape
    if (in_h, in_w) == (out_h, out_w):
        return array.copy()
    rows = np.linspace(0.0, in_h - 1, out_h) if out_h > 1 else np.array([(in_h - 1) / 2.0])
    cols = np.linspace(0.0, in_w - 1, out_w) if out_w > 1 else np.array([(in_w - 1) / 2.0])
    grid = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(array, grid, order=1, mode="nearest").astype(np.float32)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; infinite for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"PSNR needs equal shapes, got {a.shape} and {b.shape}")
    err = float(np.mean((a - b) ** 2))
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / err))
