"""Mini-batch training of sequential networks with early stopping and LR reduction."""
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.core.nn import tensor_ops as ops
from src.core.nn.network import NetworkSpec, ParameterStore, backward, check_params, forward, init_params
from src.core.nn.optimizers import Optimizer, TrainingConfig
from src.core.training.augment import AugmentConfig
from src.core.training.dataset import GlyphDataset, PrefetchLoader
from src.utils.helpers import chunk_list, make_rng
from src.utils.logger import get_logger
from src.utils.validators import DataError, DivergenceError, NonFiniteError, ShapeMismatchError

logger = get_logger(__name__)

HISTORY_COLUMNS = ["epoch", "lr", "train_loss", "val_loss", "val_acc"]


class TrainingHistory:
    """Per-epoch metrics."""

    def __init__(self) -> None:
        self.records: List[Dict[str, float]] = []

    def append(self, epoch: int, lr: float, train_loss: float, val_loss: float, val_acc: float) -> None:
        self.records.append(
            {"epoch": epoch, "lr": lr, "train_loss": train_loss, "val_loss": val_loss, "val_acc": val_acc}
        )

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=HISTORY_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


class PlateauMonitor:
    """Tracks the best monitored loss and decides on LR reduction and stopping.

    The first epoch always counts as an improvement. After ``patience``
    consecutive non-improving epochs training stops; every
    ``reduce_patience`` non-improving epochs the learning rate is reduced.
    """

    def __init__(self, patience: int, reduce_patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.reduce_patience = reduce_patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.best_epoch = 0
        self.wait = 0
        self._plateau = 0

    def update(self, epoch: int, loss: float) -> Tuple[bool, bool, bool]:
        """Record one epoch.

        Returns:
            Tuple ``(improved, reduce_lr, stop)``
        """
        if loss < self.best - self.min_delta:
            self.best = loss
            self.best_epoch = epoch
            self.wait = 0
            self._plateau = 0
            return True, False, False
        self.wait += 1
        self._plateau += 1
        reduce = self._plateau >= self.reduce_patience
        if reduce:
            self._plateau = 0
        return False, reduce, self.wait >= self.patience


class TrainResult:
    """Best-validation parameters and the run's history."""

    def __init__(self, params: ParameterStore, history: TrainingHistory, best_epoch: int, stopped_early: bool):
        self.params = params
        self.history = history
        self.best_epoch = best_epoch
        self.stopped_early = stopped_early

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def evaluate(
    spec: NetworkSpec, params: ParameterStore, dataset: GlyphDataset, batch_size: int = 256
) -> Tuple[float, float]:
    """Inference-mode mean cross-entropy and accuracy over a dataset.

    Returns:
        Tuple ``(loss, accuracy)``; ``(nan, nan)`` for an empty dataset
    """
    if len(dataset) == 0:
        return float("nan"), float("nan")
    num_classes = spec.output_shape[-1]
    total_loss = 0.0
    hits = 0
    for index in chunk_list(np.arange(len(dataset)), batch_size):
        probs = forward(spec, params, dataset.images[index]).output
        labels = dataset.labels[index]
        total_loss += ops.cross_entropy(probs, ops.one_hot(labels, num_classes)) * len(index)
        hits += int((np.argmax(probs, axis=1) == labels).sum())
    return total_loss / len(dataset), hits / len(dataset)


def _check_dataset(spec: NetworkSpec, dataset: GlyphDataset, what: str) -> None:
    if len(dataset) and dataset.input_shape != spec.input_shape:
        raise ShapeMismatchError(f"{what} samples {dataset.input_shape} do not match network input {spec.input_shape}")
    if len(dataset) and int(dataset.labels.max()) >= spec.output_shape[-1]:
        raise DataError(f"{what} label {int(dataset.labels.max())} exceeds {spec.output_shape[-1]} network outputs")


def train(
    spec: NetworkSpec,
    train_set: GlyphDataset,
    validation_set: GlyphDataset,
    config: TrainingConfig,
    augment_config: Optional[AugmentConfig] = None,
    params: Optional[ParameterStore] = None,
    history_path: Optional[Union[str, Path]] = None,
    prefetch_depth: int = 4,
    progress: bool = True,
) -> TrainResult:
    """Train a classifier with categorical cross-entropy.

    Validation loss (training loss when the validation set is empty) drives
    early stopping and learning-rate reduction. The returned parameters are
    always those of the best monitored epoch.

    Args:
        spec: Network spec ending in softmax
        train_set: Training samples
        validation_set: Held-out samples
        config: Optimizer and schedule settings
        augment_config: Training-time augmentation; None disables it
        params: Starting parameters; Glorot-initialized from the seed when omitted
        history_path: Optional CSV destination for the history
        prefetch_depth: Bounded queue depth of the batch loader
        progress: Show a tqdm progress bar

    Returns:
        TrainResult

    Raises:
        DataError: If the training set is empty or labels exceed the outputs
        DivergenceError: On a non-finite loss; carries the best checkpoint so far
    """
    if len(train_set) == 0:
        raise DataError("Training set is empty")
    _check_dataset(spec, train_set, "Training")
    _check_dataset(spec, validation_set, "Validation")

    init_rng = make_rng(config.seed)
    params = params.copy() if params is not None else init_params(spec, init_rng)
    check_params(spec, params)
    loader = PrefetchLoader(
        train_set, config.batch_size, make_rng(config.seed + 1), augment_config, shuffle=True, depth=prefetch_depth
    )
    dropout_rng = make_rng(config.seed + 2)
    optimizer = Optimizer(config)
    monitor = PlateauMonitor(config.early_stop_patience, config.reduce_lr_patience)
    history = TrainingHistory()
    num_classes = spec.output_shape[-1]
    best = params.copy()
    stopped_early = False

    logger.info(
        f"Training '{spec.name}' on {len(train_set)} samples "
        f"({config.optimizer.value}, lr={config.learning_rate}, batch={config.batch_size})"
    )
    epochs = tqdm(range(1, config.epochs + 1), desc=f"train {spec.name}", unit="epoch", disable=not progress)
    for epoch in epochs:
        lr = optimizer.learning_rate
        loss_sum = 0.0
        for images, labels in loader:
            targets = ops.one_hot(labels, num_classes)
            try:
                cache = forward(spec, params, images, training=True, rng=dropout_rng)
                probs = cache.output
                loss = ops.cross_entropy(probs, targets)
                if not np.isfinite(loss):
                    raise NonFiniteError(f"loss is {loss}")
                grads = backward(spec, params, cache, ops.cross_entropy_grad(probs, targets))
                optimizer.step(params, grads)
            except NonFiniteError as e:
                logger.error(f"Training diverged at epoch {epoch}: {e}")
                if history_path:
                    history.to_csv(history_path)
                raise DivergenceError(
                    f"Training diverged at epoch {epoch}: {e}", checkpoint=best, history=history.to_frame()
                ) from e
            loss_sum += loss * len(labels)

        train_loss = loss_sum / len(train_set)
        val_loss, val_acc = evaluate(spec, params, validation_set)
        history.append(epoch, lr, train_loss, val_loss, val_acc)
        epochs.set_postfix(loss=f"{train_loss:.4f}", val_loss=f"{val_loss:.4f}", val_acc=f"{val_acc:.3f}")
        logger.debug(f"Epoch {epoch}: lr={lr:.3g} train_loss={train_loss:.5f} val_loss={val_loss:.5f} val_acc={val_acc:.4f}")

        monitored = val_loss if len(validation_set) else train_loss
        improved, reduce_lr, stop = monitor.update(epoch, monitored)
        if improved:
            best = params.copy()
        if reduce_lr:
            optimizer.reduce_learning_rate()
        if stop:
            stopped_early = True
            logger.info(f"Early stop after epoch {epoch}; best epoch {monitor.best_epoch} (loss {monitor.best:.5f})")
            break

    if history_path:
        history.to_csv(history_path)
    return TrainResult(best, history, monitor.best_epoch, stopped_early)
