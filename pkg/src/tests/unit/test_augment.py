"""Unit tests for seeded augmentation."""
import numpy as np
import pydantic
import pytest

from src.core.training.augment import AugmentConfig, affine_matrix, augment, augment_batch


@pytest.fixture
def glyph(rng: np.random.Generator) -> np.ndarray:
    return rng.random((16, 16)).astype(np.float32)


@pytest.mark.unit
class TestAugmentConfig:
    """Test the transform recipes."""

    def test_ocr_recipe(self) -> None:
        """Test the classifier recipe magnitudes."""
        config = AugmentConfig.ocr_recipe()
        assert (config.shift, config.rotation, config.zoom, config.shear) == (0.10, 7.5, 0.20, 0.20)
        assert not config.flip
        assert config.geometric

    def test_detector_recipe(self) -> None:
        """Test the detector recipe enables the photometric transforms."""
        config = AugmentConfig.detector_recipe(seed=3)
        assert config.flip and config.contrast == 0.2 and config.salt_pepper == 0.01
        assert config.blur_sigma == (0.0, 1.0)
        assert config.seed == 3

    def test_invalid_blur_range(self) -> None:
        """Test inverted blur ranges are rejected."""
        with pytest.raises(pydantic.ValidationError):
            AugmentConfig(blur_sigma=(1.0, 0.5))

    def test_identity_affine(self) -> None:
        """Test zero rotation and shear at unit zoom is the identity."""
        np.testing.assert_allclose(affine_matrix(0.0, 0.0, 1.0), np.eye(2))


@pytest.mark.unit
class TestAugment:
    """Test random transform application."""

    def test_disabled_is_identity(self, glyph: np.ndarray) -> None:
        """Test a config with every transform off returns the input."""
        out = augment(glyph, AugmentConfig.disabled(), np.random.default_rng(0))
        np.testing.assert_array_equal(out, glyph)
        assert out.dtype == glyph.dtype

    def test_seeded(self, glyph: np.ndarray) -> None:
        """Test one seed gives one result."""
        config = AugmentConfig.detector_recipe()
        a = augment(glyph, config, np.random.default_rng(5))
        b = augment(glyph, config, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, augment(glyph, config, np.random.default_rng(6)))

    def test_output_in_unit_range(self, glyph: np.ndarray) -> None:
        """Test strong contrast stays clamped to [0, 1]."""
        config = AugmentConfig(contrast=0.9, blur_sigma=(0.5, 1.5))
        for seed in range(5):
            out = augment(glyph, config, np.random.default_rng(seed))
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_flip_only(self, glyph: np.ndarray) -> None:
        """Test a flip-only config mirrors or keeps the image."""
        config = AugmentConfig.disabled().model_copy(update={"flip": True})
        outcomes = set()
        for seed in range(20):
            out = augment(glyph, config, np.random.default_rng(seed))
            if np.array_equal(out, glyph[:, ::-1]):
                outcomes.add("flipped")
            else:
                np.testing.assert_array_equal(out, glyph)
                outcomes.add("kept")
        assert outcomes == {"flipped", "kept"}

    def test_full_salt_pepper(self, glyph: np.ndarray) -> None:
        """Test a hit rate of one leaves only black and white pixels."""
        config = AugmentConfig.disabled().model_copy(update={"salt_pepper": 1.0})
        out = augment(glyph, config, np.random.default_rng(0))
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_channel_axis_kept(self, glyph: np.ndarray) -> None:
        """Test ``[h, w, 1]`` inputs keep their shape, in batches too."""
        config = AugmentConfig.ocr_recipe()
        assert augment(glyph[:, :, np.newaxis], config, np.random.default_rng(0)).shape == (16, 16, 1)
        batch = np.stack([glyph[:, :, np.newaxis]] * 3)
        assert augment_batch(batch, config, np.random.default_rng(0)).shape == (3, 16, 16, 1)
