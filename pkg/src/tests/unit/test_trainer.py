"""Unit tests for the training loop and its schedule."""
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.core.nn.network import LayerKind, LayerSpec, NetworkSpec, init_params
from src.core.nn.optimizers import OptimizerKind, TrainingConfig
from src.core.training import trainer
from src.core.training.dataset import GlyphDataset
from src.core.training.trainer import HISTORY_COLUMNS, PlateauMonitor, evaluate, train
from src.utils.validators import DataError, DivergenceError, ShapeMismatchError


@pytest.fixture
def linear_spec() -> NetworkSpec:
    """Softmax regression on 4x4 images."""
    return NetworkSpec(
        (4, 4, 1),
        [LayerSpec.of(LayerKind.FLATTEN), LayerSpec.dense(3), LayerSpec.of(LayerKind.SOFTMAX)],
        name="linear",
    )


@pytest.fixture
def stripes(rng: np.random.Generator) -> GlyphDataset:
    """Three classes, each a bright row band plus noise."""
    labels = np.repeat(np.arange(3), 10)
    images = 0.1 * rng.random((30, 4, 4, 1))
    for n, label in enumerate(labels):
        images[n, label, :, 0] += 0.8
    return GlyphDataset(images, labels)


def _empty() -> GlyphDataset:
    return GlyphDataset(np.zeros((0, 4, 4, 1)), np.zeros(0))


def _config(**overrides) -> TrainingConfig:
    values = dict(optimizer=OptimizerKind.ADAM, learning_rate=0.05, batch_size=8, epochs=40, input_shape=(4, 4, 1))
    values.update(overrides)
    return TrainingConfig(**values)


@pytest.mark.unit
class TestPlateauMonitor:
    """Test the early-stop and LR-reduction bookkeeping."""

    def test_schedule(self) -> None:
        """Test reduce every second stale epoch and stop on the third."""
        monitor = PlateauMonitor(patience=3, reduce_patience=2)
        assert monitor.update(1, 1.0) == (True, False, False)
        assert monitor.update(2, 1.0) == (False, False, False)
        assert monitor.update(3, 1.5) == (False, True, False)
        assert monitor.update(4, 1.0) == (False, False, True)
        assert monitor.best_epoch == 1

    def test_improvement_resets(self) -> None:
        """Test a new best clears the wait counter."""
        monitor = PlateauMonitor(patience=2, reduce_patience=5)
        monitor.update(1, 1.0)
        monitor.update(2, 1.1)
        assert monitor.update(3, 0.5) == (True, False, False)
        assert monitor.wait == 0 and monitor.best == 0.5


@pytest.mark.unit
class TestTrain:
    """Test mini-batch training."""

    def test_learns_separable_classes(self, linear_spec: NetworkSpec, stripes: GlyphDataset) -> None:
        """Test softmax regression fits three separable classes."""
        result = train(linear_spec, stripes, stripes, _config(), progress=False)
        loss, accuracy = evaluate(linear_spec, result.params, stripes)
        assert accuracy == 1.0
        assert loss < result.history.records[0]["val_loss"]
        assert 1 <= result.best_epoch <= result.epochs_run

    def test_memorizes_single_sample(self, linear_spec: NetworkSpec, stripes: GlyphDataset) -> None:
        """Test one sample is fit to a training loss below 1e-3."""
        single = stripes.subset(np.array([4]))
        result = train(linear_spec, single, _empty(), _config(learning_rate=0.1, epochs=300), progress=False)
        loss, _ = evaluate(linear_spec, result.params, single)
        assert loss < 1e-3

    def test_early_stop_with_frozen_params(self, linear_spec: NetworkSpec, stripes: GlyphDataset, mocker) -> None:
        """Test a run whose updates change nothing stops after the first epoch plus patience."""
        mocker.patch.object(trainer.Optimizer, "step", side_effect=lambda params, grads: params)
        config = _config(early_stop_patience=3, epochs=20, seed=7)
        result = train(linear_spec, stripes, stripes, config, progress=False)
        assert result.epochs_run == 4
        assert result.stopped_early
        assert result.best_epoch == 1
        assert result.params.equals(init_params(linear_spec, np.random.default_rng(7)))

    def test_reproducible(self, linear_spec: NetworkSpec, stripes: GlyphDataset) -> None:
        """Test one seed gives bitwise identical parameters."""
        config = _config(epochs=5)
        a = train(linear_spec, stripes, stripes, config, progress=False)
        b = train(linear_spec, stripes, stripes, config, progress=False)
        assert a.params.equals(b.params)

    def test_history_csv(self, linear_spec: NetworkSpec, stripes: GlyphDataset, tmp_path: Path) -> None:
        """Test the history is written with one row per epoch."""
        path = tmp_path / "history.csv"
        result = train(linear_spec, stripes, stripes, _config(epochs=3), history_path=path, progress=False)
        frame = pd.read_csv(path)
        assert list(frame.columns) == HISTORY_COLUMNS
        assert len(frame) == result.epochs_run
        assert frame["epoch"].tolist() == list(range(1, result.epochs_run + 1))

    def test_divergence_keeps_checkpoint(self, linear_spec: NetworkSpec, stripes: GlyphDataset, mocker) -> None:
        """Test a non-finite loss aborts with the best parameters so far."""
        mocker.patch.object(trainer.ops, "cross_entropy", return_value=float("nan"))
        with pytest.raises(DivergenceError) as info:
            train(linear_spec, stripes, stripes, _config(), progress=False)
        assert info.value.checkpoint is not None
        assert info.value.checkpoint.names() == ["dense_1"]
        assert list(info.value.history.columns) == HISTORY_COLUMNS

    def test_input_errors(self, linear_spec: NetworkSpec, stripes: GlyphDataset) -> None:
        """Test empty sets, mismatched shapes and out-of-range labels."""
        with pytest.raises(DataError, match="empty"):
            train(linear_spec, _empty(), stripes, _config(), progress=False)
        wrong_shape = GlyphDataset(np.zeros((2, 5, 5, 1)), np.zeros(2))
        with pytest.raises(ShapeMismatchError):
            train(linear_spec, wrong_shape, _empty(), _config(), progress=False)
        bad_labels = GlyphDataset(np.zeros((2, 4, 4, 1)), np.array([0, 5]))
        with pytest.raises(DataError, match="exceeds"):
            train(linear_spec, bad_labels, _empty(), _config(), progress=False)

    def test_evaluate_empty(self, linear_spec: NetworkSpec) -> None:
        """Test an empty dataset evaluates to NaN."""
        params = init_params(linear_spec, np.random.default_rng(0))
        loss, accuracy = evaluate(linear_spec, params, _empty())
        assert np.isnan(loss) and np.isnan(accuracy)
