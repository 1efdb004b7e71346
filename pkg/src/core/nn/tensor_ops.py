"""Dense tensor kernels with paired backward passes.

Tensors are numpy arrays in channels-last layout. Spatial ops accept a
single sample ``[h, w, c]`` or a batch ``[n, h, w, c]``; vector ops accept
``[m]`` or ``[n, m]``. All kernels preserve the input dtype (float32 by
default) and never touch global random state.
"""
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.utils.validators import NonFiniteError, ShapeMismatchError, ValidationError

DTYPE = np.float32


def _batched(x: np.ndarray, rank: int) -> Tuple[np.ndarray, bool]:
    """Add a leading batch axis when ``x`` has the unbatched rank."""
    if x.ndim == rank:
        return x[np.newaxis], True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeMismatchError(f"Expected rank {rank} or {rank + 1} tensor, got shape {x.shape}")


def _unbatched(x: np.ndarray, squeeze: bool) -> np.ndarray:
    return x[0] if squeeze else x


def conv_param_count(kh: int, kw: int, in_channels: int, out_channels: int) -> int:
    """Learnable parameters of a convolution: (kh*kw*in + 1) * out."""
    return (kh * kw * in_channels + 1) * out_channels


def dense_param_count(in_units: int, out_units: int) -> int:
    """Learnable parameters of an affine layer: (in + 1) * out."""
    return (in_units + 1) * out_units


# ---------------------------------------------------------------------------
# Convolution


def conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-1 valid convolution (cross-correlation).

    Args:
        x: Input ``[h, w, c]`` or ``[n, h, w, c]``
        weights: Kernel ``[kh, kw, c, out_channels]``
        bias: Bias ``[out_channels]``

    Returns:
        Output ``[h-kh+1, w-kw+1, out_channels]`` (batched if the input was)

    Raises:
        ShapeMismatchError: If channel counts or spatial extents are incompatible
    """
    xb, squeeze = _batched(np.asarray(x), 3)
    if weights.ndim != 4:
        raise ShapeMismatchError(f"Conv kernel must be rank 4, got shape {weights.shape}")
    kh, kw, cin, cout = weights.shape
    _, h, w, c = xb.shape
    if c != cin:
        raise ShapeMismatchError(f"Input has {c} channels but kernel expects {cin}")
    if h < kh or w < kw:
        raise ShapeMismatchError(f"Input {h}x{w} is smaller than kernel {kh}x{kw}")
    if bias.shape != (cout,):
        raise ShapeMismatchError(f"Bias shape {bias.shape} does not match {cout} output channels")

    # windows: [n, oh, ow, c, kh, kw]
    windows = sliding_window_view(xb, (kh, kw), axis=(1, 2))
    out = np.tensordot(windows, weights, axes=([3, 4, 5], [2, 0, 1]))
    out = out + bias
    return _unbatched(out.astype(xb.dtype, copy=False), squeeze)


def conv2d_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a stride-1 valid convolution.

    Returns:
        Tuple ``(grad_input, grad_weights, grad_bias)``
    """
    xb, squeeze = _batched(np.asarray(x), 3)
    gb, _ = _batched(np.asarray(grad_out), 3)
    kh, kw, cin, cout = weights.shape
    n, h, w, _ = xb.shape
    expected = (n, h - kh + 1, w - kw + 1, cout)
    if gb.shape != expected:
        raise ShapeMismatchError(f"grad_out shape {gb.shape} does not match conv output {expected}")

    grad_bias = gb.sum(axis=(0, 1, 2))

    windows = sliding_window_view(xb, (kh, kw), axis=(1, 2))
    # [c, kh, kw, out] -> [kh, kw, c, out]
    grad_weights = np.tensordot(windows, gb, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)

    # full correlation of grad_out with the flipped kernel
    padded = np.pad(gb, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    g_windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))
    flipped = weights[::-1, ::-1]
    grad_input = np.tensordot(g_windows, flipped, axes=([3, 4, 5], [3, 0, 1]))

    dtype = xb.dtype
    return (
        _unbatched(grad_input.astype(dtype, copy=False), squeeze),
        grad_weights.astype(weights.dtype, copy=False),
        grad_bias.astype(weights.dtype, copy=False),
    )


# ---------------------------------------------------------------------------
# Pooling


def maxpool2(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2; trailing odd rows/columns are dropped.

    Returns:
        Tuple ``(output, argmax)`` where argmax holds the winning position
        (0..3, row-major inside the window) for backward routing

    Raises:
        ShapeMismatchError: If height or width is below 2
    """
    xb, squeeze = _batched(np.asarray(x), 3)
    n, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ShapeMismatchError(f"maxpool2 needs at least 2x2 input, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    blocks = xb[:, : 2 * h2, : 2 * w2, :].reshape(n, h2, 2, w2, 2, c)
    blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., np.newaxis], axis=-1)[..., 0]
    return _unbatched(out, squeeze), _unbatched(argmax, squeeze)


def maxpool2_backward(
    grad_out: np.ndarray, argmax: np.ndarray, input_shape: Tuple[int, ...]
) -> np.ndarray:
    """Route pooled gradients back to the winning input positions."""
    gb, squeeze = _batched(np.asarray(grad_out), 3)
    ab, _ = _batched(np.asarray(argmax), 3)
    full_shape = tuple(input_shape) if not squeeze else (1,) + tuple(input_shape)
    n, h, w, c = full_shape
    h2, w2 = h // 2, w // 2
    if gb.shape != (n, h2, w2, c):
        raise ShapeMismatchError(f"grad_out shape {gb.shape} does not match pooled shape {(n, h2, w2, c)}")

    blocks = np.zeros((n, h2, w2, c, 4), dtype=gb.dtype)
    np.put_along_axis(blocks, ab[..., np.newaxis], gb[..., np.newaxis], axis=-1)
    blocks = blocks.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * h2, 2 * w2, c)
    grad_input = np.zeros(full_shape, dtype=gb.dtype)
    grad_input[:, : 2 * h2, : 2 * w2, :] = blocks
    return _unbatched(grad_input, squeeze)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Average over the spatial axes: ``[h, w, c] -> [c]``."""
    xb, squeeze = _batched(np.asarray(x), 3)
    out = xb.mean(axis=(1, 2), dtype=np.float64).astype(xb.dtype)
    return _unbatched(out, squeeze)


def global_avg_pool_backward(grad_out: np.ndarray, input_shape: Tuple[int, ...]) -> np.ndarray:
    squeeze = len(input_shape) == 3
    full_shape = (1,) + tuple(input_shape) if squeeze else tuple(input_shape)
    gb = np.asarray(grad_out).reshape(full_shape[0], 1, 1, full_shape[3])
    grad = np.broadcast_to(gb / (full_shape[1] * full_shape[2]), full_shape).astype(gb.dtype)
    return _unbatched(grad, squeeze)


# ---------------------------------------------------------------------------
# Dense and reshaping


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine layer ``x @ weights + bias``.

    Raises:
        ShapeMismatchError: If dimensions disagree
    """
    x = np.asarray(x)
    if weights.ndim != 2 or x.shape[-1] != weights.shape[0]:
        raise ShapeMismatchError(f"Dense input {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeMismatchError(f"Bias shape {bias.shape} does not match weights {weights.shape}")
    return (x @ weights + bias).astype(x.dtype, copy=False)


def dense_backward(
    x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the affine layer.

    Returns:
        Tuple ``(grad_input, grad_weights, grad_bias)``
    """
    x = np.asarray(x)
    grad_out = np.asarray(grad_out)
    if grad_out.shape[-1] != weights.shape[1] or grad_out.shape[:-1] != x.shape[:-1]:
        raise ShapeMismatchError(f"grad_out shape {grad_out.shape} incompatible with dense layer {weights.shape}")
    x2 = x.reshape(-1, weights.shape[0])
    g2 = grad_out.reshape(-1, weights.shape[1])
    grad_input = grad_out @ weights.T
    grad_weights = x2.T @ g2
    grad_bias = g2.sum(axis=0)
    return grad_input, grad_weights.astype(weights.dtype, copy=False), grad_bias.astype(weights.dtype, copy=False)


def flatten(x: np.ndarray, batched: bool = False) -> np.ndarray:
    """Collapse all non-batch axes into one."""
    x = np.asarray(x)
    return x.reshape(x.shape[0], -1) if batched else x.reshape(-1)


def flatten_backward(grad_out: np.ndarray, input_shape: Tuple[int, ...]) -> np.ndarray:
    return np.asarray(grad_out).reshape(input_shape)


# ---------------------------------------------------------------------------
# Activations


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0).astype(np.asarray(x).dtype, copy=False)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (np.asarray(x) > 0)


def softmax(x: np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax over the last axis.

    Raises:
        NonFiniteError: If the input contains NaN or infinite values
    """
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("softmax input contains non-finite values")
    shifted = x.astype(np.float64) - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype)


def softmax_backward(probs: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax: ``p * (g - <g, p>)``."""
    inner = (grad_out * probs).sum(axis=-1, keepdims=True)
    return probs * (grad_out - inner)


def dropout(
    x: np.ndarray,
    rate: float,
    rng: Optional[np.random.Generator],
    training: bool,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout.

    At inference (or rate 0) the input is returned unchanged. In training each
    element is zeroed with probability ``rate`` and survivors are scaled by
    ``1 / (1 - rate)``.

    Returns:
        Tuple ``(output, mask)``; mask is None when dropout is the identity

    Raises:
        ValidationError: If rate is outside [0, 1) or no rng is given in training
    """
    if not 0.0 <= rate < 1.0:
        raise ValidationError(f"Dropout rate ({rate}) must be within [0, 1)")
    x = np.asarray(x)
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValidationError("Dropout in training mode requires an rng")
    keep = rng.random(x.shape) >= rate
    mask = (keep / (1.0 - rate)).astype(x.dtype)
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask


# ---------------------------------------------------------------------------
# Losses


def cross_entropy(probs: np.ndarray, targets: np.ndarray, eps: float = 1e-12) -> float:
    """Mean categorical cross-entropy of probability rows against one-hot targets."""
    probs = np.asarray(probs, dtype=np.float64).reshape(-1, probs.shape[-1])
    targets = np.asarray(targets, dtype=np.float64).reshape(probs.shape)
    return float(-(targets * np.log(probs + eps)).sum(axis=1).mean())


def cross_entropy_grad(probs: np.ndarray, targets: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Gradient of :func:`cross_entropy` with respect to the probabilities."""
    batch = probs.shape[0] if probs.ndim == 2 else 1
    return (-targets / (probs + eps) / batch).astype(probs.dtype)


def mse(predicted: np.ndarray, target: np.ndarray) -> float:
    diff = np.asarray(predicted, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff ** 2))


def mse_grad(predicted: np.ndarray, target: np.ndarray) -> np.ndarray:
    predicted = np.asarray(predicted)
    return (2.0 * (predicted - target) / predicted.size).astype(predicted.dtype)


def one_hot(indices: np.ndarray, num_classes: int, dtype: type = DTYPE) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros(indices.shape + (num_classes,), dtype=dtype)
    np.put_along_axis(out, indices[..., np.newaxis], 1.0, axis=-1)
    return out
