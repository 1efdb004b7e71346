"""Unit tests for network specs, parameter stores and forward/backward."""
import numpy as np
import pytest

from src.core.nn import tensor_ops as ops
from src.core.nn.network import (
    LayerKind,
    LayerSpec,
    Network,
    NetworkSpec,
    backward,
    check_params,
    forward,
    init_params,
    zero_params,
)
from src.utils.validators import NonFiniteError, ShapeMismatchError, StaleActivationError, ValidationError


@pytest.fixture
def small_spec() -> NetworkSpec:
    """Conv + pool + dense classifier."""
    return NetworkSpec(
        (6, 6, 1),
        [
            LayerSpec.conv(2),
            LayerSpec.of(LayerKind.RELU),
            LayerSpec.of(LayerKind.MAXPOOL2),
            LayerSpec.of(LayerKind.FLATTEN),
            LayerSpec.dense(3),
            LayerSpec.of(LayerKind.SOFTMAX),
        ],
        name="small",
    )


@pytest.mark.unit
class TestNetworkSpec:
    """Test spec construction and shape propagation."""

    def test_shapes_and_names(self, small_spec: NetworkSpec) -> None:
        """Test shape chain and automatic layer names."""
        assert small_spec.shapes == [(6, 6, 1), (5, 5, 2), (5, 5, 2), (2, 2, 2), (8,), (3,), (3,)]
        assert [layer.name for layer in small_spec.layers][:2] == ["conv2d_1", "relu_1"]
        assert small_spec.output_activation == "softmax"
        assert small_spec.param_shapes(0) == ((2, 2, 1, 2), (2,))
        assert small_spec.param_shapes(4) == ((8, 3), (3,))

    def test_dense_on_image_rejected(self) -> None:
        """Test dense layer without flatten fails shape propagation."""
        with pytest.raises(ShapeMismatchError, match="vector input"):
            NetworkSpec((4, 4, 1), [LayerSpec.dense(2)])

    def test_duplicate_names_rejected(self) -> None:
        """Test explicit names must be unique."""
        with pytest.raises(ValidationError, match="unique"):
            NetworkSpec((4,), [LayerSpec.dense(2, name="a"), LayerSpec.dense(2, name="a")])

    def test_invalid_layers(self) -> None:
        """Test layer argument validation."""
        with pytest.raises(ValidationError, match="units >= 1"):
            LayerSpec.dense(0)
        with pytest.raises(ValidationError, match="within"):
            LayerSpec.dropout(1.0)


@pytest.mark.unit
class TestParameters:
    """Test initialization and the parameter store."""

    def test_glorot_bounds(self, small_spec: NetworkSpec) -> None:
        """Test weights lie within the Glorot limit and biases are zero."""
        params = init_params(small_spec, np.random.default_rng(0))
        weights, bias = params["dense_1"]
        limit = np.sqrt(6.0 / (8 + 3))
        assert np.all(np.abs(weights) <= limit)
        assert np.all(bias == 0)
        assert weights.dtype == np.float32
        assert params.count() == (2 * 2 * 1 + 1) * 2 + (8 + 1) * 3

    def test_seeded_init_is_reproducible(self, small_spec: NetworkSpec) -> None:
        """Test identical seeds give identical parameters."""
        a = init_params(small_spec, np.random.default_rng(5))
        b = init_params(small_spec, np.random.default_rng(5))
        assert a.equals(b)
        assert not a.equals(init_params(small_spec, np.random.default_rng(6)))

    def test_check_params(self, small_spec: NetworkSpec) -> None:
        """Test mismatched parameter shapes are rejected."""
        params = zero_params(small_spec)
        check_params(small_spec, params)
        params.tensors["dense_1"] = (np.zeros((9, 3), np.float32), np.zeros(3, np.float32))
        with pytest.raises(ShapeMismatchError, match="dense_1"):
            check_params(small_spec, params)

    def test_copy_is_deep(self, small_spec: NetworkSpec) -> None:
        """Test copies do not share buffers."""
        params = init_params(small_spec, np.random.default_rng(0))
        clone = params.copy()
        clone["dense_1"][0][0, 0] += 1.0
        assert not params.equals(clone)


@pytest.mark.unit
class TestForwardBackward:
    """Test execution of specs."""

    def test_zero_weights_give_uniform_output(self, small_spec: NetworkSpec) -> None:
        """Test all-zero parameters give a uniform softmax."""
        out = Network(small_spec, zero_params(small_spec)).predict(np.random.default_rng(0).random((6, 6, 1)))
        np.testing.assert_allclose(out, 1.0 / 3.0, rtol=1e-6)

    def test_batched_output(self, small_spec: NetworkSpec) -> None:
        """Test batches return one simplex per sample."""
        params = init_params(small_spec, np.random.default_rng(0))
        out = forward(small_spec, params, np.random.default_rng(1).random((4, 6, 6, 1)).astype(np.float32)).output
        assert out.shape == (4, 3)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)

    def test_input_shape_mismatch(self, small_spec: NetworkSpec) -> None:
        """Test wrong input shapes are rejected."""
        with pytest.raises(ShapeMismatchError, match="does not match network input"):
            forward(small_spec, zero_params(small_spec), np.zeros((5, 5, 1)))

    def test_non_finite_reports_layer(self, small_spec: NetworkSpec) -> None:
        """Test NaN activations name the failing layer."""
        params = zero_params(small_spec)
        params["conv2d_1"][1][:] = np.nan
        with pytest.raises(NonFiniteError) as info:
            forward(small_spec, params, np.zeros((6, 6, 1), np.float32))
        assert info.value.layer_index == 0

    def test_gradients_are_congruent(self, small_spec: NetworkSpec) -> None:
        """Test backward returns gradients shaped like the parameters."""
        params = init_params(small_spec, np.random.default_rng(0))
        cache = forward(small_spec, params, np.random.default_rng(1).random((2, 6, 6, 1)).astype(np.float32))
        targets = ops.one_hot(np.array([0, 2]), 3)
        grads = backward(small_spec, params, cache, ops.cross_entropy_grad(cache.output, targets))
        params.check_congruent(grads)
        assert np.any(grads["dense_1"][0] != 0)

    def test_stale_cache_rejected(self, small_spec: NetworkSpec) -> None:
        """Test a cache from before a parameter update cannot be used."""
        params = init_params(small_spec, np.random.default_rng(0))
        cache = forward(small_spec, params, np.zeros((6, 6, 1), np.float32))
        params.version += 1
        with pytest.raises(StaleActivationError, match="changed since"):
            backward(small_spec, params, cache, np.zeros(3, np.float32))

    def test_cache_from_other_spec_rejected(self, small_spec: NetworkSpec) -> None:
        """Test a cache from a different network is rejected."""
        other = NetworkSpec((3,), [LayerSpec.dense(3)])
        other_params = zero_params(other)
        cache = forward(other, other_params, np.zeros(3, np.float32))
        with pytest.raises(StaleActivationError, match="does not belong"):
            backward(small_spec, other_params, cache, np.zeros(3, np.float32))
