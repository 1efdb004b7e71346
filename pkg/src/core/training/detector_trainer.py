"""Training of the dual-branch detector heads on precomputed features."""
from typing import Optional

import numpy as np
from tqdm import tqdm

from src.core.detection.heads import DetectorHead, merge_params, split_params
from src.core.nn import tensor_ops as ops
from src.core.nn.network import backward, forward
from src.core.nn.optimizers import Optimizer, TrainingConfig
from src.core.training.trainer import PlateauMonitor, TrainingHistory
from src.utils.helpers import make_rng
from src.utils.logger import get_logger
from src.utils.validators import DataError, DivergenceError, NonFiniteError, ShapeMismatchError

logger = get_logger(__name__)


def _targets(presence: np.ndarray) -> np.ndarray:
    """Class 0 is the object, class 1 the background."""
    return ops.one_hot(np.where(presence > 0, 0, 1), 2)


def combined_loss(
    head: DetectorHead,
    features: np.ndarray,
    boxes: np.ndarray,
    presence: np.ndarray,
) -> float:
    """Class cross-entropy plus bbox MSE over positive samples, unit weights."""
    probs = forward(head.class_spec, head.class_params, features).output
    loss = ops.cross_entropy(probs, _targets(presence))
    positive = presence > 0
    if positive.any():
        pred = forward(head.bbox_spec, head.bbox_params, features[positive]).output
        loss += ops.mse(pred, boxes[positive])
    return loss


def train_detector_head(
    head: DetectorHead,
    features: np.ndarray,
    boxes: np.ndarray,
    presence: np.ndarray,
    config: Optional[TrainingConfig] = None,
    progress: bool = False,
) -> TrainingHistory:
    """Fit both head branches in place.

    The class branch learns object vs background from every sample; the bbox
    branch regresses normalized boxes on samples that contain the object.
    The training loss drives learning-rate reduction and early stopping, and
    the head keeps the parameters of its best epoch.

    Args:
        head: Head to train (updated in place)
        features: Feature maps ``[n, *head.input_shape]``
        boxes: Target boxes ``[n, 4]`` as ``(x_min, y_min, x_max, y_max)``
        presence: 1 where the object is present, else 0
        config: Defaults to the vehicle stage (SGD, batch 32)
        progress: Show a tqdm progress bar

    Returns:
        TrainingHistory (``val_*`` columns hold the full-set loss after each epoch)

    Raises:
        ShapeMismatchError: If array shapes disagree
        DataError: If there are no samples
        DivergenceError: On a non-finite loss
    """
    features = np.asarray(features, dtype=np.float32)
    boxes = np.asarray(boxes, dtype=np.float32)
    presence = np.asarray(presence)
    if len(features) == 0:
        raise DataError("No detector training samples")
    if features.shape[1:] != head.input_shape or boxes.shape != (len(features), 4) or presence.shape != (len(features),):
        raise ShapeMismatchError(
            f"Expected features [n, {head.input_shape}], boxes [n, 4], presence [n]; "
            f"got {features.shape}, {boxes.shape}, {presence.shape}"
        )

    config = config or TrainingConfig.vehicle_stage(epochs=100, input_shape=head.input_shape)
    rng = make_rng(config.seed)
    class_opt = Optimizer(config)
    bbox_opt = Optimizer(config)
    monitor = PlateauMonitor(config.early_stop_patience, config.reduce_lr_patience)
    history = TrainingHistory()
    best = head.params.copy()

    for epoch in tqdm(range(1, config.epochs + 1), desc="train head", unit="epoch", disable=not progress):
        lr = class_opt.learning_rate
        order = rng.permutation(len(features))
        for start in range(0, len(order), config.batch_size):
            index = order[start:start + config.batch_size]
            x, t, p = features[index], _targets(presence[index]), presence[index] > 0
            try:
                cache = forward(head.class_spec, head.class_params, x, training=True, rng=rng)
                grads = backward(head.class_spec, head.class_params, cache, ops.cross_entropy_grad(cache.output, t))
                class_opt.step(head.class_params, grads)
                if p.any():
                    cache = forward(head.bbox_spec, head.bbox_params, x[p], training=True, rng=rng)
                    grads = backward(head.bbox_spec, head.bbox_params, cache, ops.mse_grad(cache.output, boxes[index][p]))
                    bbox_opt.step(head.bbox_params, grads)
            except NonFiniteError as e:
                raise DivergenceError(f"Head training diverged at epoch {epoch}: {e}", checkpoint=best) from e

        loss = combined_loss(head, features, boxes, presence)
        if not np.isfinite(loss):
            raise DivergenceError(f"Head training diverged at epoch {epoch}: loss {loss}", checkpoint=best)
        history.append(epoch, lr, loss, loss, float("nan"))

        improved, reduce_lr, stop = monitor.update(epoch, loss)
        if improved:
            best = merge_params(head.class_params, head.bbox_params).copy()
        if reduce_lr:
            class_opt.reduce_learning_rate()
            bbox_opt.reduce_learning_rate()
        if stop:
            logger.info(f"Head training stopped at epoch {epoch}; best loss {monitor.best:.3g}")
            break

    head.class_params, head.bbox_params = split_params(best, head.class_spec, head.bbox_spec)
    logger.info(f"Trained detector head for {len(history)} epochs, loss {monitor.best:.3g}")
    return history

