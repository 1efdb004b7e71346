"""Unit tests for feature providers and detector heads."""
from pathlib import Path

import numpy as np
import pytest

from src.core.detection.backbone import (
    FileFeatureProvider,
    IntensityBoxProvider,
    ToyBackbone,
    build_provider,
    describe,
)
from src.core.detection.heads import (
    BBox,
    DetectorHead,
    DetectorStage,
    bbox_mse,
    crop,
    detect,
    handcrafted_params,
    merge_params,
)
from src.core.imaging.image import GrayImage
from src.core.nn.network import ParameterStore
from src.core.nn.weights_io import save_features
from src.utils.validators import DataError, DegenerateCropError, ShapeMismatchError, ValidationError


@pytest.fixture
def dark_block() -> GrayImage:
    """10x20 mid-gray image with a dark block at rows 2..5, columns 4..9."""
    pixels = np.full((10, 20), 0.5)
    pixels[2:6, 4:10] = 0.1
    return GrayImage(pixels)


@pytest.mark.unit
class TestProviders:
    """Test the feature provider implementations."""

    def test_toy_backbone_shape_and_seed(self, dark_block: GrayImage) -> None:
        """Test the conv stack output shape and seeded determinism."""
        backbone = ToyBackbone(channels=16, input_size=32, seed=3)
        features = backbone.extract(dark_block)
        assert features.shape == (6, 6, 16)
        assert backbone.feature_dim == 16 and backbone.spatial == (6, 6)
        np.testing.assert_array_equal(features, ToyBackbone(16, 32, seed=3).extract(dark_block))
        with pytest.raises(ValidationError):
            ToyBackbone(input_size=4)

    def test_intensity_band_features(self, dark_block: GrayImage) -> None:
        """Test box, presence, fraction and mean of the band pixels."""
        features = IntensityBoxProvider(0.0, 0.3).extract(dark_block)[0, 0]
        np.testing.assert_allclose(features[:4], [4 / 20, 2 / 10, 10 / 20, 6 / 10], rtol=1e-6)
        assert features[4] == 1.0
        assert features[5] == pytest.approx(24 / 200)
        assert features[6] == pytest.approx(0.1, abs=1e-6)
        assert features[7] == 1.0

    def test_empty_band(self, dark_block: GrayImage) -> None:
        """Test a band below the minimum fraction reports absence."""
        features = IntensityBoxProvider(0.75, 1.0).extract(dark_block)[0, 0]
        np.testing.assert_array_equal(features[:7], 0.0)
        assert features[7] == 1.0

    def test_invalid_band(self) -> None:
        """Test inverted bands are rejected."""
        with pytest.raises(ValidationError):
            IntensityBoxProvider(0.6, 0.2)

    def test_file_provider(self, tmp_path: Path) -> None:
        """Test features are looked up by the image's file stem."""
        features = np.random.default_rng(0).random((2, 2, 4)).astype(np.float32)
        save_features(features, tmp_path / "frame_0003.blpw")
        provider = FileFeatureProvider(tmp_path, (2, 2, 4))
        image = GrayImage(np.zeros((4, 4)), source=Path("frames/frame_0003.pgm"))
        np.testing.assert_array_equal(provider.extract(image), features)

        with pytest.raises(DataError, match="No precomputed"):
            provider.extract(GrayImage(np.zeros((4, 4)), source=Path("frames/frame_0004.pgm")))
        with pytest.raises(DataError, match="decoded from a file"):
            provider.extract(GrayImage(np.zeros((4, 4))))
        with pytest.raises(ShapeMismatchError, match="features shape"):
            FileFeatureProvider(tmp_path, (1, 1, 4)).extract(image)

    def test_build_provider(self) -> None:
        """Test construction by name."""
        assert isinstance(build_provider("intensity", low=0.0, high=0.3), IntensityBoxProvider)
        assert describe(build_provider("toy", channels=4)) == "ToyBackbone(6, 6, 4)"
        assert describe(None) == "none"
        with pytest.raises(ValidationError, match="Unknown"):
            build_provider("resnet")


@pytest.mark.unit
class TestBBox:
    """Test normalized boxes."""

    def test_from_output_clamps_and_orders(self) -> None:
        """Test raw regression values become a valid box."""
        box = BBox.from_output([1.2, 0.5, -0.1, 0.2])
        assert box == BBox(0.0, 0.2, 1.0, 0.5)

    def test_invalid_box(self) -> None:
        """Test inverted coordinates are rejected."""
        with pytest.raises(ValidationError):
            BBox(0.6, 0.1, 0.4, 0.5)

    def test_pixel_bounds_round_half_up(self) -> None:
        """Test halves round toward the larger edge."""
        assert BBox(0.25, 0.05, 0.75, 0.95).pixel_bounds(10, 10) == (1, 3, 10, 8)

    def test_crop(self, dark_block: GrayImage) -> None:
        """Test the crop covers the rounded rectangle and keeps the source."""
        patch = crop(dark_block, BBox(0.2, 0.2, 0.5, 0.6))
        assert patch.shape == (4, 6)
        np.testing.assert_allclose(patch.pixels, 0.1, rtol=1e-6)
        with pytest.raises(DegenerateCropError):
            crop(dark_block, BBox(0.5, 0.5, 0.51, 0.5))

    def test_bbox_mse(self) -> None:
        """Test the coordinate MSE."""
        assert bbox_mse(BBox(0, 0, 1, 1), BBox(0, 0, 1, 1)) == 0.0
        assert bbox_mse(BBox(0, 0, 0.5, 0.5), BBox(0, 0, 1, 1)) == pytest.approx(0.125)


@pytest.mark.unit
class TestDetectorHead:
    """Test the dual-branch head."""

    def test_handcrafted_detection(self, dark_block: GrayImage) -> None:
        """Test the hand-set head reports the band box with a high score."""
        head = DetectorHead(8, params=handcrafted_params(8))
        detection = detect(dark_block, IntensityBoxProvider(0.0, 0.3), head, 0.5, DetectorStage.PLATE)
        assert detection is not None
        assert detection.score > 0.99
        np.testing.assert_allclose(detection.bbox.as_array(), [0.2, 0.2, 0.5, 0.6], atol=1e-6)
        assert detection.to_dict()["stage"] == "plate"

    def test_absent_object(self, dark_block: GrayImage) -> None:
        """Test no band pixels means no detection."""
        head = DetectorHead(8, params=handcrafted_params(8))
        assert detect(dark_block, IntensityBoxProvider(0.75, 1.0), head, 0.5) is None

    def test_threshold_validated(self, dark_block: GrayImage) -> None:
        """Test the threshold must be a probability."""
        head = DetectorHead(8, params=handcrafted_params(8))
        with pytest.raises(ValidationError):
            detect(dark_block, IntensityBoxProvider(0.0, 0.3), head, 1.5)

    def test_zero_head_is_uniform(self) -> None:
        """Test an all-zero head is undecided."""
        probs, box = DetectorHead(8).predict(np.ones((1, 1, 8), np.float32))
        np.testing.assert_allclose(probs, [0.5, 0.5])
        np.testing.assert_array_equal(box, 0.0)

    def test_save_and_load(self, tmp_path: Path) -> None:
        """Test both branches share one weight file."""
        head = DetectorHead.initialized(8, np.random.default_rng(0))
        path = head.save(tmp_path / "head.blpw")
        loaded = DetectorHead.load(path, 8)
        assert loaded.params.equals(head.params)
        features = np.random.default_rng(1).random((1, 1, 8)).astype(np.float32)
        for a, b in zip(loaded.predict(features), head.predict(features)):
            np.testing.assert_array_equal(a, b)

    def test_wrong_parameters(self) -> None:
        """Test missing and unknown layers are reported."""
        params = handcrafted_params(8)
        extra = merge_params(params, ParameterStore({"stray": (np.zeros(1), np.zeros(1))}))
        with pytest.raises(ShapeMismatchError, match="unknown"):
            DetectorHead(8, params=extra)
        with pytest.raises(ShapeMismatchError):
            DetectorHead(16, params=params)

    def test_feature_shape_checked(self) -> None:
        """Test features must match the head input."""
        with pytest.raises(ShapeMismatchError, match="expects"):
            DetectorHead(8).predict(np.zeros((1, 1, 4), np.float32))
