"""Training configuration and parameter update rules."""
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from src.core.nn.network import ParameterStore
from src.utils.logger import get_logger
from src.utils.validators import validate_finite

logger = get_logger(__name__)


class OptimizerKind(str, Enum):
    """Optimizer choices."""
    SGD = "sgd"
    ADAM = "adam"


class TrainingConfig(BaseModel):
    """Hyper-parameters of one training run."""

    optimizer: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = Field(default=1e-3, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=50, ge=1)
    input_shape: Tuple[int, ...] = (64, 64, 1)
    early_stop_patience: int = Field(default=5, ge=1)
    reduce_lr_factor: float = Field(default=0.5, gt=0.0, le=1.0)
    reduce_lr_patience: int = Field(default=2, ge=1)
    min_learning_rate: float = Field(default=1e-6, ge=0.0)
    seed: int = 42

    @field_validator("input_shape", mode="before")
    @classmethod
    def parse_shape(cls, v):  # type: ignore
        """Accept a comma-separated string or sequence."""
        if isinstance(v, str):
            return tuple(int(d) for d in v.split(",") if d.strip())
        return tuple(int(d) for d in v)

    @classmethod
    def vehicle_stage(cls, **overrides) -> "TrainingConfig":  # type: ignore
        """SGD, batch 32, 300x300 images, 300 epochs."""
        values = dict(optimizer=OptimizerKind.SGD, learning_rate=1e-2, batch_size=32,
                      epochs=300, input_shape=(300, 300, 3))
        values.update(overrides)
        return cls(**values)

    @classmethod
    def plate_stage(cls, **overrides) -> "TrainingConfig":  # type: ignore
        """Adam, batch 64, 200x200 images, 300 epochs."""
        values = dict(optimizer=OptimizerKind.ADAM, learning_rate=1e-3, batch_size=64,
                      epochs=300, input_shape=(200, 200, 3))
        values.update(overrides)
        return cls(**values)


def _check_grads(params: ParameterStore, grads: ParameterStore) -> None:
    params.check_congruent(grads)
    for name, (gw, gb) in grads.items():
        validate_finite(gw, f"Weight gradient of '{name}'")
        validate_finite(gb, f"Bias gradient of '{name}'")


def sgd_step(
    params: ParameterStore,
    grads: ParameterStore,
    learning_rate: float,
    momentum: float = 0.0,
    velocity: Optional[Dict[str, Tuple[np.ndarray, np.ndarray]]] = None,
) -> ParameterStore:
    """In-place SGD update ``v = momentum * v - lr * g; w += v``.

    Args:
        params: Parameters to update
        grads: Gradients congruent with params
        learning_rate: Step size
        momentum: Momentum coefficient in [0, 1)
        velocity: Per-layer velocity buffers, created on first use

    Returns:
        The updated ParameterStore (same object)

    Raises:
        NonFiniteError: If any gradient is non-finite; params stay untouched
    """
    _check_grads(params, grads)
    velocity = velocity if velocity is not None else {}
    for name, (w, b) in params.items():
        gw, gb = grads[name]
        vw, vb = velocity.get(name, (np.zeros_like(w), np.zeros_like(b)))
        vw = (momentum * vw - learning_rate * gw).astype(w.dtype)
        vb = (momentum * vb - learning_rate * gb).astype(b.dtype)
        velocity[name] = (vw, vb)
        w += vw
        b += vb
    params.version += 1
    return params


def adam_step(
    params: ParameterStore,
    grads: ParameterStore,
    step_index: int,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
    moments: Optional[Dict[str, Tuple[np.ndarray, ...]]] = None,
) -> ParameterStore:
    """In-place Adam update with bias correction.

    Args:
        params: Parameters to update
        grads: Gradients congruent with params
        step_index: 1-based step counter used for bias correction
        learning_rate: Step size
        beta1: First-moment decay
        beta2: Second-moment decay
        epsilon: Denominator fuzz
        moments: Per-layer (m_w, v_w, m_b, v_b) buffers, created on first use

    Returns:
        The updated ParameterStore (same object)

    Raises:
        NonFiniteError: If any gradient is non-finite; params stay untouched
    """
    _check_grads(params, grads)
    moments = moments if moments is not None else {}
    correction1 = 1.0 - beta1 ** step_index
    correction2 = 1.0 - beta2 ** step_index
    for name, (w, b) in params.items():
        gw, gb = grads[name]
        state = moments.get(name)
        if state is None:
            state = (np.zeros_like(w), np.zeros_like(w), np.zeros_like(b), np.zeros_like(b))
        updated = []
        for tensor, grad, m, v in ((w, gw, state[0], state[1]), (b, gb, state[2], state[3])):
            m = beta1 * m + (1.0 - beta1) * grad
            v = beta2 * v + (1.0 - beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            tensor -= (learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)).astype(tensor.dtype)
            updated += [m.astype(tensor.dtype), v.astype(tensor.dtype)]
        moments[name] = (updated[0], updated[1], updated[2], updated[3])
    params.version += 1
    return params


class Optimizer:
    """Stateful optimizer driven by a TrainingConfig."""

    def __init__(self, config: TrainingConfig):
        self.config = config
        self.learning_rate = config.learning_rate
        self.step_index = 0
        self._state: Dict = {}

    def step(self, params: ParameterStore, grads: ParameterStore) -> ParameterStore:
        """Apply one update to ``params`` in place."""
        self.step_index += 1
        if self.config.optimizer == OptimizerKind.SGD:
            return sgd_step(params, grads, self.learning_rate, self.config.momentum, self._state)
        return adam_step(
            params,
            grads,
            self.step_index,
            self.learning_rate,
            self.config.beta1,
            self.config.beta2,
            self.config.epsilon,
            self._state,
        )

    def reduce_learning_rate(self) -> float:
        """Multiply the learning rate by the configured factor."""
        new_rate = max(self.learning_rate * self.config.reduce_lr_factor, self.config.min_learning_rate)
        if new_rate != self.learning_rate:
            logger.info(f"Reducing learning rate {self.learning_rate:.3g} -> {new_rate:.3g}")
        self.learning_rate = new_rate
        return new_rate
