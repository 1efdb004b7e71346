"""Unit tests for Chan-Vese and RSF segmentation."""
import numpy as np
import pytest

from src.core.imaging.synthetic import bias_field_card
from src.core.segmentation.level_sets import (
    CvParams,
    SegmentationModel,
    chan_vese,
    contrast_normalize,
    perimeter,
    rsf,
    two_phase_energy,
)
from src.core.segmentation.segmenter import glyph_mask


@pytest.fixture
def half_split() -> np.ndarray:
    """32x32 image, left half 0.1 and right half 0.9."""
    pixels = np.full((32, 32), 0.1)
    pixels[:, 16:] = 0.9
    return pixels


def _agreement(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(a == b))


@pytest.mark.unit
class TestEnergy:
    """Test the hard-partition energy used as the CV oracle."""

    def test_perimeter(self) -> None:
        """Test boundary pair counting."""
        mask = np.zeros((4, 4), dtype=bool)
        mask[1:3, 1:3] = True
        assert perimeter(mask) == 8
        assert perimeter(np.ones((3, 3), dtype=bool)) == 0

    def test_true_split_is_optimal(self, half_split: np.ndarray) -> None:
        """Test the half split beats shifted partitions."""
        truth = np.zeros((32, 32), dtype=bool)
        truth[:, 16:] = True
        best = two_phase_energy(half_split, truth, mu=1.0)
        for column in (8, 12, 20, 24):
            shifted = np.zeros((32, 32), dtype=bool)
            shifted[:, column:] = True
            assert two_phase_energy(half_split, shifted, mu=1.0) > best

    def test_contrast_normalize(self) -> None:
        """Test min-max scaling and the constant case."""
        normalized, degenerate = contrast_normalize(np.array([[0.2, 0.6]]))
        np.testing.assert_allclose(normalized, [[0.0, 1.0]])
        assert not degenerate
        assert contrast_normalize(np.full((2, 2), 0.3))[1]


@pytest.mark.unit
class TestChanVese:
    """Test the global two-phase model."""

    def test_half_split(self, half_split: np.ndarray) -> None:
        """Test the bright half is recovered with its mean intensities."""
        result = chan_vese(half_split)
        truth = np.zeros((32, 32), dtype=bool)
        truth[:, 16:] = True
        assert result.model == SegmentationModel.CV
        assert _agreement(result.mask, truth) >= 0.99
        assert result.c1 == pytest.approx(0.9, abs=0.02)
        assert result.c2 == pytest.approx(0.1, abs=0.02)

    def test_inverted_image(self, half_split: np.ndarray) -> None:
        """Test inverting the image complements the mask."""
        direct = chan_vese(half_split).mask
        inverted = chan_vese(1.0 - half_split).mask
        assert _agreement(inverted, ~direct) >= 0.99

    def test_energy_trace_non_increasing(self, clean_plate: np.ndarray) -> None:
        """Test checkpointed energies never rise."""
        result = chan_vese(clean_plate, CvParams(max_iter=60))
        assert len(result.energy) >= 2
        assert np.all(np.diff(result.energy) <= 1e-6 * abs(result.energy[0]))

    def test_constant_image(self) -> None:
        """Test a flat image is flagged degenerate."""
        result = chan_vese(np.full((10, 10), 0.4))
        assert result.degenerate
        assert not result.mask.any()
        assert result.to_dict()["foreground_fraction"] == 0.0


@pytest.mark.unit
class TestRsf:
    """Test region-scalable fitting."""

    def test_agrees_with_cv_on_easy_input(self, half_split: np.ndarray) -> None:
        """Test both models agree without inhomogeneity."""
        assert _agreement(rsf(half_split).mask, chan_vese(half_split).mask) >= 0.98

    def test_bias_field_card(self) -> None:
        """Test RSF recovers glyphs under a linear bias field where CV does not."""
        image, truth = bias_field_card()
        rsf_agreement = _agreement(glyph_mask(rsf(image)), truth)
        cv_agreement = _agreement(glyph_mask(chan_vese(image)), truth)
        assert rsf_agreement >= 0.95
        assert cv_agreement < 0.95

    def test_constant_image(self) -> None:
        """Test a flat image is flagged degenerate."""
        result = rsf(np.zeros((8, 8)))
        assert result.degenerate
        assert result.model == SegmentationModel.RSF
