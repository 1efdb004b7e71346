"""Unit tests for the grayscale image type and codecs."""
import io
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from src.core.imaging.image import (
    GrayImage,
    decode_image,
    encode_pgm,
    encode_ppm,
    psnr,
    read_image,
    resize,
    split_netpbm_stream,
    to_gray,
    write_pgm,
)
from src.utils.validators import FrameDecodeError, ShapeMismatchError, ValidationError


@pytest.mark.unit
class TestGrayImage:
    """Test the image container."""

    def test_values_clipped(self) -> None:
        """Test pixels are clipped into [0, 1] and stored as float32."""
        image = GrayImage(np.array([[-1.0, 0.5], [2.0, 1.0]]))
        assert image.pixels.dtype == np.float32
        assert image.pixels.min() == 0.0 and image.pixels.max() == 1.0
        assert image.shape == (2, 2)

    def test_rejects_bad_shapes(self) -> None:
        """Test non-2-D or empty arrays."""
        with pytest.raises(ShapeMismatchError):
            GrayImage(np.zeros((2, 2, 3)))
        with pytest.raises(ShapeMismatchError):
            GrayImage(np.zeros((0, 4)))

    def test_equality(self) -> None:
        """Test value equality and copies."""
        image = GrayImage(np.full((3, 3), 0.25))
        assert image == image.copy()
        assert image != GrayImage(np.full((3, 3), 0.5))

    def test_luma(self) -> None:
        """Test colour conversion weights."""
        pixels = np.zeros((1, 1, 3))
        pixels[..., 0] = 1.0
        assert to_gray(pixels)[0, 0] == pytest.approx(0.299, abs=1e-6)


@pytest.mark.unit
class TestCodecs:
    """Test Netpbm and PNG decoding."""

    def test_binary_pgm_round_trip(self) -> None:
        """Test P5 encode/decode within quantization."""
        pixels = np.random.default_rng(0).random((7, 9))
        decoded = decode_image(encode_pgm(pixels))
        assert decoded.shape == (7, 9)
        np.testing.assert_allclose(decoded.pixels, pixels, atol=1.0 / 510 + 1e-6)

    def test_ascii_pgm(self) -> None:
        """Test P2 decoding."""
        decoded = decode_image(encode_pgm(np.array([[0.0, 1.0]]), binary=False))
        np.testing.assert_array_equal(decoded.pixels, [[0.0, 1.0]])

    def test_header_comments(self) -> None:
        """Test comment lines inside the header are skipped."""
        data = b"P5\n# a comment\n2 1\n255\n" + bytes([0, 255])
        np.testing.assert_array_equal(decode_image(data).pixels, [[0.0, 1.0]])

    def test_ppm_is_converted_to_gray(self) -> None:
        """Test P6 input goes through luminance."""
        pixels = np.zeros((2, 2, 3))
        pixels[..., 1] = 1.0
        decoded = decode_image(encode_ppm(pixels))
        np.testing.assert_allclose(decoded.pixels, 0.587, atol=1e-6)

    def test_png_through_pillow(self) -> None:
        """Test PNG bytes decode to the same gray levels."""
        buffer = io.BytesIO()
        Image.fromarray(np.array([[0, 51], [102, 255]], dtype=np.uint8)).save(buffer, format="PNG")
        decoded = decode_image(buffer.getvalue())
        np.testing.assert_allclose(decoded.pixels, [[0.0, 0.2], [0.4, 1.0]], atol=1e-5)

    def test_unrecognized_bytes(self) -> None:
        """Test unknown formats raise a decode error."""
        with pytest.raises(FrameDecodeError, match="Unrecognized"):
            decode_image(b"GIF89a")

    def test_truncated_raster(self) -> None:
        """Test a short raster is reported."""
        with pytest.raises(FrameDecodeError, match="truncated"):
            decode_image(b"P5\n4 4\n255\n" + bytes(10))

    def test_non_numeric_ascii_sample(self) -> None:
        """Test a non-numeric P2 sample is a decode error."""
        with pytest.raises(FrameDecodeError, match="Non-numeric"):
            decode_image(b"P2\n2 2\n255\n1 x 3 4\n")

    def test_invalid_dimensions(self) -> None:
        """Test zero-width headers."""
        with pytest.raises(FrameDecodeError, match="Invalid"):
            decode_image(b"P5\n0 4\n255\n")

    def test_corrupt_png(self) -> None:
        """Test a PNG signature with garbage behind it."""
        with pytest.raises(FrameDecodeError, match="PNG"):
            decode_image(b"\x89PNG\r\n\x1a\n" + bytes(16))

    def test_read_missing_file(self, tmp_path: Path) -> None:
        """Test unreadable paths raise a decode error."""
        with pytest.raises(FrameDecodeError, match="Cannot read"):
            read_image(tmp_path / "missing.pgm")

    def test_write_and_read(self, tmp_path: Path) -> None:
        """Test a mask written as PGM reads back as 0/1."""
        mask = np.array([[True, False], [False, True]])
        image = read_image(write_pgm(tmp_path / "mask.pgm", mask))
        np.testing.assert_array_equal(image.pixels, mask.astype(np.float32))
        assert image.source == tmp_path / "mask.pgm"


@pytest.mark.unit
class TestFrameStream:
    """Test splitting concatenated binary frames."""

    def test_split_frames(self) -> None:
        """Test each frame becomes one chunk."""
        a = encode_pgm(np.zeros((3, 4)))
        b = encode_pgm(np.ones((2, 2)))
        chunks = split_netpbm_stream(a + b"\n" + b)
        assert chunks == [a, b]

    def test_short_tail_kept(self) -> None:
        """Test a truncated final frame is kept for the decoder to report."""
        a = encode_pgm(np.zeros((3, 4)))
        chunks = split_netpbm_stream(a + a[:-3])
        assert len(chunks) == 2
        with pytest.raises(FrameDecodeError):
            decode_image(chunks[1])

    def test_ascii_frames_rejected(self) -> None:
        """Test P2 frames cannot be concatenated."""
        with pytest.raises(FrameDecodeError, match="only binary"):
            split_netpbm_stream(encode_pgm(np.zeros((2, 2)), binary=False))


@pytest.mark.unit
class TestResampling:
    """Test resize and PSNR."""

    def test_resize_shape_and_constant(self) -> None:
        """Test output shape and constant preservation."""
        out = resize(np.full((10, 20), 0.3), (7, 5))
        assert out.shape == (7, 5)
        np.testing.assert_allclose(out, 0.3, rtol=1e-6)

    def test_resize_corners(self) -> None:
        """Test corner-aligned sampling keeps the corners."""
        pixels = np.arange(12, dtype=np.float32).reshape(3, 4)
        out = resize(pixels, (5, 7))
        assert out[0, 0] == pytest.approx(0.0)
        assert out[-1, -1] == pytest.approx(11.0)

    def test_resize_invalid_target(self) -> None:
        """Test non-positive targets."""
        with pytest.raises(ValidationError):
            resize(np.zeros((4, 4)), (0, 4))

    def test_psnr(self) -> None:
        """Test identical inputs and a known error level."""
        a = np.zeros((4, 4))
        assert psnr(a, a) == float("inf")
        assert psnr(a, a + 0.1) == pytest.approx(20.0)
        with pytest.raises(ShapeMismatchError):
            psnr(a, np.zeros((3, 4)))
