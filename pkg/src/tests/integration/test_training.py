"""Integration tests for desk-scale OCR training."""
import numpy as np
import pytest

from src.core.nn.architectures import build_prose_ocr_spec
from src.core.nn.network import Network
from src.core.nn.optimizers import TrainingConfig
from src.core.ocr.classes import CharClassSet
from src.core.ocr.recognizer import recognize_crops
from src.core.segmentation.components import CharacterCrop
from src.core.training.augment import AugmentConfig
from src.core.training.dataset import split, synthetic_glyph_corpus
from src.core.training.trainer import evaluate, train


@pytest.mark.integration
@pytest.mark.slow
class TestGlyphTraining:
    """Test the classifier learns procedural glyphs."""

    def test_ten_class_accuracy(self) -> None:
        """Test held-out accuracy of at least 90% within 50 epochs."""
        corpus = synthetic_glyph_corpus(10, 80, size=16, seed=0)
        parts = split(len(corpus), (0.7, 0.15, 0.15), seed=0)
        spec = build_prose_ocr_spec(num_classes=10)
        config = TrainingConfig.plate_stage(epochs=50, input_shape=spec.input_shape, seed=0)
        result = train(
            spec,
            corpus.subset(parts.train),
            corpus.subset(parts.validation),
            config,
            AugmentConfig.disabled(seed=0),
            progress=False,
        )
        _, accuracy = evaluate(spec, result.params, corpus.subset(parts.test))
        assert accuracy >= 0.90
        assert result.epochs_run <= 50

    def test_trained_net_reads_crops(self) -> None:
        """Test a trained network labels rendered crops through the recognizer."""
        corpus = synthetic_glyph_corpus(10, 60, size=16, seed=1, class_offset=50)
        spec = build_prose_ocr_spec(num_classes=10)
        config = TrainingConfig.plate_stage(epochs=40, input_shape=spec.input_shape, seed=1)
        result = train(spec, corpus, corpus.subset(np.arange(0, len(corpus), 5)), config, progress=False)

        digits = CharClassSet([str(d) for d in range(10)], expected=10)
        crops = [CharacterCrop(corpus.images[n, :, :, 0], (0, 0, 16, 16), i, 0) for i, n in enumerate(range(0, 600, 60))]
        readings = recognize_crops(crops, Network(spec, result.params), digits)
        correct = sum(r.label == str(d) for d, r in enumerate(readings))
        assert correct >= 9
