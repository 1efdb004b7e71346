"""Finite-difference verification of analytic network gradients."""
from typing import List, Optional, Tuple

import numpy as np

from src.core.nn import tensor_ops as ops
from src.core.nn.network import ForwardCache, LayerKind, NetworkSpec, ParameterStore, backward, forward, init_params
from src.utils.helpers import make_rng
from src.utils.logger import get_logger
from src.utils.validators import ValidationError

logger = get_logger(__name__)

MAX_CHECK_PARAMS = 10_000


class GradCheckResult:
    """Outcome of :func:`gradient_check`."""

    def __init__(self, max_rel_error: float, checked: int, skipped: int, worst: Optional[Tuple[str, int]]):
        self.max_rel_error = max_rel_error
        self.checked = checked
        self.skipped = skipped
        self.worst = worst

    def to_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "checked": self.checked,
            "skipped": self.skipped,
            "worst": list(self.worst) if self.worst else None,
        }


def _loss(spec: NetworkSpec, output: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    if spec.output_activation == "softmax":
        return ops.cross_entropy(output, target), ops.cross_entropy_grad(output, target)
    return ops.mse(output, target), ops.mse_grad(output, target)


def _pattern(spec: NetworkSpec, cache: ForwardCache) -> List[np.ndarray]:
    """ReLU gates and max-pool winners; a change means a kink was crossed."""
    pattern = []
    for index, layer in enumerate(spec.layers):
        if layer.kind == LayerKind.RELU:
            pattern.append(cache.activations[index] > 0)
        elif layer.kind == LayerKind.MAXPOOL2:
            pattern.append(cache.aux[index])
    return pattern


def _same(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(
    spec: NetworkSpec,
    sample: np.ndarray,
    target: Optional[np.ndarray] = None,
    params: Optional[ParameterStore] = None,
    num_coords: int = 100,
    step: float = 1e-5,
    seed: int = 0,
) -> GradCheckResult:
    """Compare back-propagated gradients with central differences.

    Runs in float64. Coordinates whose perturbation flips a ReLU gate or a
    max-pool winner are redrawn, since the loss is not differentiable there.
    The relative error of a coordinate is ``|a - n| / max(|a|, |n|, s)``
    where ``s`` is 1% of the analytic gradient's RMS, so coordinates with
    negligible gradient are measured against the gradient's overall scale.

    Args:
        spec: Network spec (at most 10^4 parameters)
        sample: One input of ``spec.input_shape``
        target: Loss target; a random one-hot (softmax nets) or normal vector when omitted
        params: Parameters; Glorot-initialized from ``seed`` when omitted
        num_coords: Number of parameter coordinates to check
        step: Finite-difference step
        seed: Seed for parameters, target and coordinate sampling

    Returns:
        GradCheckResult

    Raises:
        ValidationError: If the network has too many parameters
    """
    rng = make_rng(seed)
    params = (params if params is not None else init_params(spec, rng)).astype(np.float64)
    if params.count() > MAX_CHECK_PARAMS:
        raise ValidationError(f"Gradient check needs <= {MAX_CHECK_PARAMS} parameters, got {params.count()}")
    x = np.asarray(sample, dtype=np.float64)
    out_dim = spec.output_shape[-1]
    if target is None:
        if spec.output_activation == "softmax":
            target = ops.one_hot(np.array(rng.integers(out_dim)), out_dim, dtype=np.float64)
        else:
            target = rng.normal(size=spec.output_shape)
    target = np.asarray(target, dtype=np.float64)

    cache = forward(spec, params, x)
    base_pattern = _pattern(spec, cache)
    _, loss_grad = _loss(spec, cache.output, target)
    grads = backward(spec, params, cache, loss_grad)

    slots = [(name, part) for name in params.names() for part in (0, 1)]
    sizes = np.array([params[name][part].size for name, part in slots])
    all_grads = np.concatenate([grads[name][part].ravel() for name, part in slots])
    scale = max(0.01 * float(np.sqrt(np.mean(all_grads ** 2))) if all_grads.size else 0.0, 1e-12)

    worst_err, worst, checked, skipped = 0.0, None, 0, 0
    attempts = 0
    while checked < num_coords and attempts < 20 * num_coords:
        attempts += 1
        slot = int(rng.choice(len(slots), p=sizes / sizes.sum()))
        name, part = slots[slot]
        tensor = params[name][part]
        flat = int(rng.integers(tensor.size))
        coord = np.unravel_index(flat, tensor.shape)

        original = tensor[coord]
        values, patterns = [], []
        for delta in (step, -step):
            tensor[coord] = original + delta
            trial = forward(spec, params, x)
            values.append(_loss(spec, trial.output, target)[0])
            patterns.append(_pattern(spec, trial))
        tensor[coord] = original
        if not (_same(base_pattern, patterns[0]) and _same(base_pattern, patterns[1])):
            skipped += 1
            continue

        numeric = (values[0] - values[1]) / (2.0 * step)
        analytic = float(grads[name][part][coord])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), scale)
        checked += 1
        if err > worst_err:
            worst_err, worst = err, (name, flat)

    logger.debug(f"Gradient check on '{spec.name}': max rel err {worst_err:.2e} over {checked} coords ({skipped} skipped)")
    return GradCheckResult(worst_err, checked, skipped, worst)
