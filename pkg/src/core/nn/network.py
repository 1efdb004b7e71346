"""Sequential network description, parameter store and forward/backward execution."""
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.core.nn import tensor_ops as ops
from src.utils.logger import get_logger
from src.utils.validators import (
    ShapeMismatchError,
    StaleActivationError,
    ValidationError,
    validate_finite,
)

logger = get_logger(__name__)


class LayerKind(Enum):
    """Supported layer kinds."""
    CONV2D = "conv2d"
    MAXPOOL2 = "max_pooling2d"
    DROPOUT = "dropout"
    DENSE = "dense"
    RELU = "relu"
    SOFTMAX = "softmax"
    FLATTEN = "flatten"
    GLOBAL_AVG_POOL = "global_average_pooling2d"


PARAMETRIC_KINDS = (LayerKind.CONV2D, LayerKind.DENSE)


class LayerSpec:
    """One layer of a sequential network."""

    def __init__(
        self,
        kind: LayerKind,
        units: int = 0,
        rate: float = 0.0,
        kernel_size: int = 2,
        name: Optional[str] = None,
    ):
        """Initialize layer spec.

        Args:
            kind: Layer kind
            units: Output channels (conv) or output units (dense)
            rate: Dropout rate in [0, 1)
            kernel_size: Square kernel size for convolutions
            name: Optional layer name; assigned by NetworkSpec when omitted

        Raises:
            ValidationError: If units or rate are out of range
        """
        if kind in PARAMETRIC_KINDS and units < 1:
            raise ValidationError(f"{kind.value} layer needs units >= 1, got {units}")
        if kind == LayerKind.DROPOUT and not 0.0 <= rate < 1.0:
            raise ValidationError(f"Dropout rate ({rate}) must be within [0, 1)")
        if kind == LayerKind.CONV2D and kernel_size < 1:
            raise ValidationError(f"Kernel size must be >= 1, got {kernel_size}")
        self.kind = kind
        self.units = units
        self.rate = rate
        self.kernel_size = kernel_size
        self.name = name

    @property
    def parametric(self) -> bool:
        return self.kind in PARAMETRIC_KINDS

    def signature(self) -> Tuple:
        return (self.kind.value, self.units, self.rate, self.kernel_size, self.name)

    def to_dict(self) -> Dict:
        """Convert layer spec to dictionary."""
        return {
            "kind": self.kind.value,
            "units": self.units,
            "rate": self.rate,
            "kernel_size": self.kernel_size,
            "name": self.name,
        }

    # Constructors mirroring the layer vocabulary
    @classmethod
    def conv(cls, out_channels: int, kernel_size: int = 2, name: Optional[str] = None) -> "LayerSpec":
        return cls(LayerKind.CONV2D, units=out_channels, kernel_size=kernel_size, name=name)

    @classmethod
    def dense(cls, out_units: int, name: Optional[str] = None) -> "LayerSpec":
        return cls(LayerKind.DENSE, units=out_units, name=name)

    @classmethod
    def dropout(cls, rate: float, name: Optional[str] = None) -> "LayerSpec":
        return cls(LayerKind.DROPOUT, rate=rate, name=name)

    @classmethod
    def of(cls, kind: LayerKind, name: Optional[str] = None) -> "LayerSpec":
        return cls(kind, name=name)


class NetworkSpec:
    """Ordered layer list over a fixed input shape."""

    def __init__(self, input_shape: Sequence[int], layers: Sequence[LayerSpec], name: str = "network"):
        """Initialize and shape-check a network spec.

        Args:
            input_shape: Per-sample input shape, e.g. ``(64, 64, 1)``
            layers: Ordered layers
            name: Network name

        Raises:
            ShapeMismatchError: If shape propagation fails for any layer
        """
        if any(int(d) < 1 for d in input_shape):
            raise ShapeMismatchError(f"Input shape {tuple(input_shape)} has a non-positive dimension")
        self.input_shape = tuple(int(d) for d in input_shape)
        self.name = name
        self.layers: List[LayerSpec] = []

        counters: Dict[LayerKind, int] = {}
        for layer in layers:
            counters[layer.kind] = counters.get(layer.kind, 0) + 1
            if layer.name is None:
                suffix = counters[layer.kind]
                layer = LayerSpec(
                    layer.kind,
                    units=layer.units,
                    rate=layer.rate,
                    kernel_size=layer.kernel_size,
                    name=f"{layer.kind.value}_{suffix}",
                )
            self.layers.append(layer)

        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValidationError(f"Layer names must be unique in network '{name}'")

        self.shapes = self._propagate()

    def _propagate(self) -> List[Tuple[int, ...]]:
        shapes = [self.input_shape]
        shape = self.input_shape
        for index, layer in enumerate(self.layers):
            shape = output_shape(layer, shape, index)
            shapes.append(shape)
        return shapes

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return self.shapes[-1]

    @property
    def output_activation(self) -> str:
        if self.layers and self.layers[-1].kind == LayerKind.SOFTMAX:
            return "softmax"
        return "linear"

    def parametric_layers(self) -> List[Tuple[int, LayerSpec]]:
        return [(i, layer) for i, layer in enumerate(self.layers) if layer.parametric]

    def param_shapes(self, index: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Weight and bias shapes of the parametric layer at ``index``."""
        layer = self.layers[index]
        in_shape = self.shapes[index]
        if layer.kind == LayerKind.CONV2D:
            k = layer.kernel_size
            return (k, k, in_shape[-1], layer.units), (layer.units,)
        if layer.kind == LayerKind.DENSE:
            return (in_shape[0], layer.units), (layer.units,)
        raise ValidationError(f"Layer {layer.name} has no parameters")

    def signature(self) -> Tuple:
        return (self.input_shape,) + tuple(layer.signature() for layer in self.layers)

    def to_dict(self) -> Dict:
        """Convert network spec to dictionary."""
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": [layer.to_dict() for layer in self.layers],
            "output_shape": list(self.output_shape),
        }


def output_shape(layer: LayerSpec, shape: Tuple[int, ...], index: int = 0) -> Tuple[int, ...]:
    """Propagate a per-sample shape through one layer.

    Raises:
        ShapeMismatchError: If the layer cannot consume the shape
    """
    kind = layer.kind
    where = f"layer {index} ({layer.name or kind.value})"
    if kind == LayerKind.CONV2D:
        if len(shape) != 3:
            raise ShapeMismatchError(f"{where} expects [h, w, c] input, got {shape}")
        k = layer.kernel_size
        if shape[0] < k or shape[1] < k:
            raise ShapeMismatchError(f"{where}: input {shape[0]}x{shape[1]} smaller than kernel {k}x{k}")
        return (shape[0] - k + 1, shape[1] - k + 1, layer.units)
    if kind == LayerKind.MAXPOOL2:
        if len(shape) != 3 or shape[0] < 2 or shape[1] < 2:
            raise ShapeMismatchError(f"{where} needs spatial extent >= 2x2, got {shape}")
        return (shape[0] // 2, shape[1] // 2, shape[2])
    if kind == LayerKind.DENSE:
        if len(shape) != 1:
            raise ShapeMismatchError(f"{where} expects a vector input, got {shape}")
        return (layer.units,)
    if kind == LayerKind.FLATTEN:
        return (int(np.prod(shape)),)
    if kind == LayerKind.GLOBAL_AVG_POOL:
        if len(shape) != 3:
            raise ShapeMismatchError(f"{where} expects [h, w, c] input, got {shape}")
        return (shape[2],)
    if kind == LayerKind.SOFTMAX and len(shape) != 1:
        raise ShapeMismatchError(f"{where} expects a vector input, got {shape}")
    return shape


class ParameterStore:
    """Named weight/bias pairs for every parametric layer, in layer order."""

    def __init__(self, tensors: Optional[Dict[str, Tuple[np.ndarray, np.ndarray]]] = None):
        self.tensors: Dict[str, Tuple[np.ndarray, np.ndarray]] = dict(tensors or {})
        # bumped by optimizer steps; forward caches record it
        self.version = 0

    def __getitem__(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> List[str]:
        return list(self.tensors)

    def items(self) -> Iterator[Tuple[str, Tuple[np.ndarray, np.ndarray]]]:
        return iter(self.tensors.items())

    def arrays(self) -> Iterator[np.ndarray]:
        for weights, bias in self.tensors.values():
            yield weights
            yield bias

    def count(self) -> int:
        return int(sum(w.size + b.size for w, b in self.tensors.values()))

    def copy(self) -> "ParameterStore":
        store = ParameterStore({k: (w.copy(), b.copy()) for k, (w, b) in self.tensors.items()})
        store.version = self.version
        return store

    def zeros_like(self) -> "ParameterStore":
        return ParameterStore({k: (np.zeros_like(w), np.zeros_like(b)) for k, (w, b) in self.tensors.items()})

    def astype(self, dtype: type) -> "ParameterStore":
        return ParameterStore({k: (w.astype(dtype), b.astype(dtype)) for k, (w, b) in self.tensors.items()})

    def equals(self, other: "ParameterStore") -> bool:
        """Bitwise equality of names, shapes, dtypes and values."""
        if self.names() != other.names():
            return False
        for name in self.tensors:
            for a, b in zip(self.tensors[name], other.tensors[name]):
                if a.shape != b.shape or a.dtype != b.dtype or a.tobytes() != b.tobytes():
                    return False
        return True

    def check_congruent(self, other: "ParameterStore") -> None:
        """Raise if ``other`` does not have the same names and shapes."""
        if self.names() != other.names():
            raise ShapeMismatchError(f"Parameter names differ: {self.names()} vs {other.names()}")
        for name in self.tensors:
            for a, b in zip(self.tensors[name], other.tensors[name]):
                if a.shape != b.shape:
                    raise ShapeMismatchError(f"Parameter '{name}' shape {a.shape} vs {b.shape}")


def init_params(spec: NetworkSpec, rng: np.random.Generator, dtype: type = ops.DTYPE) -> ParameterStore:
    """Glorot-uniform (fan average) weights and zero biases.

    Args:
        spec: Network spec
        rng: Seeded generator
        dtype: Parameter dtype

    Returns:
        Freshly initialized ParameterStore
    """
    tensors: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
    for index, layer in spec.parametric_layers():
        w_shape, b_shape = spec.param_shapes(index)
        if layer.kind == LayerKind.CONV2D:
            receptive = w_shape[0] * w_shape[1]
            fan_in, fan_out = receptive * w_shape[2], receptive * w_shape[3]
        else:
            fan_in, fan_out = w_shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-limit, limit, size=w_shape).astype(dtype)
        tensors[layer.name] = (weights, np.zeros(b_shape, dtype=dtype))
    return ParameterStore(tensors)


def zero_params(spec: NetworkSpec, dtype: type = ops.DTYPE) -> ParameterStore:
    """All-zero parameters."""
    tensors = {}
    for index, layer in spec.parametric_layers():
        w_shape, b_shape = spec.param_shapes(index)
        tensors[layer.name] = (np.zeros(w_shape, dtype=dtype), np.zeros(b_shape, dtype=dtype))
    return ParameterStore(tensors)


def check_params(spec: NetworkSpec, params: ParameterStore) -> None:
    """Verify that ``params`` matches the parametric layers of ``spec``.

    Raises:
        ShapeMismatchError: On missing layers or wrong tensor shapes
    """
    expected = [layer.name for _, layer in spec.parametric_layers()]
    if params.names() != expected:
        raise ShapeMismatchError(f"Parameter layers {params.names()} do not match spec layers {expected}")
    for index, layer in spec.parametric_layers():
        w_shape, b_shape = spec.param_shapes(index)
        weights, bias = params[layer.name]
        if weights.shape != w_shape or bias.shape != b_shape:
            raise ShapeMismatchError(
                f"Layer '{layer.name}' expects {w_shape}/{b_shape}, got {weights.shape}/{bias.shape}"
            )


class ForwardCache:
    """Activations of one forward pass, needed by :func:`backward`."""

    def __init__(self, signature: Tuple, params_version: int, params_id: int, batched: bool):
        self.signature = signature
        self.params_version = params_version
        self.params_id = params_id
        self.batched = batched
        # activations[0] is the (batched) input; activations[i+1] is layer i's output
        self.activations: List[np.ndarray] = []
        self.aux: List[Optional[np.ndarray]] = []

    @property
    def output(self) -> np.ndarray:
        out = self.activations[-1]
        return out if self.batched else out[0]


def forward(
    spec: NetworkSpec,
    params: ParameterStore,
    x: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> ForwardCache:
    """Run the network layer by layer.

    Args:
        spec: Network spec
        params: Parameters matching ``spec``
        x: One sample of ``spec.input_shape`` or a batch ``[n, *input_shape]``
        training: Enables dropout
        rng: Generator used by dropout in training mode

    Returns:
        ForwardCache with every activation; ``.output`` is the network output

    Raises:
        ShapeMismatchError: If the input shape does not match ``spec``
        NonFiniteError: If any activation becomes non-finite (reports the layer index)
    """
    x = np.asarray(x)
    if x.shape == spec.input_shape:
        batched = False
        x = x[np.newaxis]
    elif x.shape[1:] == spec.input_shape:
        batched = True
    else:
        raise ShapeMismatchError(f"Input shape {x.shape} does not match network input {spec.input_shape}")

    cache = ForwardCache(spec.signature(), params.version, id(params), batched)
    cache.activations.append(x)
    a = x
    for index, layer in enumerate(spec.layers):
        aux: Optional[np.ndarray] = None
        kind = layer.kind
        if kind == LayerKind.CONV2D:
            weights, bias = params[layer.name]
            a = ops.conv2d(a, weights, bias)
        elif kind == LayerKind.DENSE:
            weights, bias = params[layer.name]
            a = ops.dense(a, weights, bias)
        elif kind == LayerKind.MAXPOOL2:
            a, aux = ops.maxpool2(a)
        elif kind == LayerKind.RELU:
            a = ops.relu(a)
        elif kind == LayerKind.SOFTMAX:
            a = ops.softmax(a)
        elif kind == LayerKind.FLATTEN:
            a = ops.flatten(a, batched=True)
        elif kind == LayerKind.GLOBAL_AVG_POOL:
            a = ops.global_avg_pool(a)
        elif kind == LayerKind.DROPOUT:
            a, aux = ops.dropout(a, layer.rate, rng, training)

        validate_finite(a, f"Activation of {layer.name}", index)
        cache.activations.append(a)
        cache.aux.append(aux)
    return cache


def backward(
    spec: NetworkSpec,
    params: ParameterStore,
    cache: ForwardCache,
    loss_grad: np.ndarray,
) -> ParameterStore:
    """Back-propagate a loss gradient through the network.

    Args:
        spec: Network spec used for the forward pass
        params: Parameters used for the forward pass
        cache: Activations from :func:`forward`
        loss_grad: Gradient of the loss with respect to the network output

    Returns:
        ParameterStore of gradients congruent with ``params``

    Raises:
        StaleActivationError: If the cache came from another spec or parameter state
        ShapeMismatchError: If loss_grad does not match the output shape
    """
    if cache.signature != spec.signature() or len(cache.activations) != len(spec.layers) + 1:
        raise StaleActivationError(f"Activation cache does not belong to network '{spec.name}'")
    if cache.params_id != id(params) or cache.params_version != params.version:
        raise StaleActivationError(
            f"Parameters changed since the forward pass (version {cache.params_version} -> {params.version})"
        )

    g = np.asarray(loss_grad)
    if not cache.batched:
        g = g[np.newaxis]
    if g.shape != cache.activations[-1].shape:
        raise ShapeMismatchError(f"Loss gradient shape {g.shape} does not match output {cache.activations[-1].shape}")

    grads = params.zeros_like()
    for index in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[index]
        a_in = cache.activations[index]
        a_out = cache.activations[index + 1]
        aux = cache.aux[index]
        kind = layer.kind
        if kind == LayerKind.CONV2D:
            weights, _ = params[layer.name]
            g, gw, gb = ops.conv2d_backward(a_in, weights, g)
            grads.tensors[layer.name] = (gw, gb)
        elif kind == LayerKind.DENSE:
            weights, _ = params[layer.name]
            g, gw, gb = ops.dense_backward(a_in, weights, g)
            grads.tensors[layer.name] = (gw, gb)
        elif kind == LayerKind.MAXPOOL2:
            g = ops.maxpool2_backward(g, aux, a_in.shape)
        elif kind == LayerKind.RELU:
            g = ops.relu_backward(a_in, g)
        elif kind == LayerKind.SOFTMAX:
            g = ops.softmax_backward(a_out, g)
        elif kind == LayerKind.FLATTEN:
            g = ops.flatten_backward(g, a_in.shape)
        elif kind == LayerKind.GLOBAL_AVG_POOL:
            g = ops.global_avg_pool_backward(g, a_in.shape)
        elif kind == LayerKind.DROPOUT:
            g = ops.dropout_backward(g, aux)
    return grads


class Network:
    """A spec bound to its parameters, for inference."""

    def __init__(self, spec: NetworkSpec, params: ParameterStore):
        check_params(spec, params)
        self.spec = spec
        self.params = params

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode forward pass."""
        return forward(self.spec, self.params, x, training=False).output

    def __repr__(self) -> str:
        return f"Network(name={self.spec.name!r}, layers={len(self.spec.layers)}, params={self.params.count()})"
