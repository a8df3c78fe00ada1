import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import direct_conv2d
from trypoconv.gradcheck import BCELayer, gradient_check
from trypoconv.model import ModelConfig, build_model
from trypoconv.nn import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    GlobalPool,
    MaxPool2,
    ReLU,
    conv2d,
    make_rng,
    sigmoid_bce,
)


def conv_with(w, b):
    layer = Conv2D(w.shape[1], w.shape[0], w.shape[2], dtype=w.dtype)
    layer.weight.value = w
    layer.bias.value = b
    layer.weight.grad = np.zeros_like(w)
    layer.bias.grad = np.zeros_like(b)
    return layer


class TestConv2D:
    def test_identity_1x1(self, rng):
        x = rng.standard_normal((2, 1, 5, 7)).astype(np.float32)
        out = conv2d(x, np.ones((1, 1, 1, 1), np.float32), np.zeros(1, np.float32))
        np.testing.assert_array_equal(out, x)

    def test_zero_kernel_gives_bias(self, rng):
        x = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
        out = conv2d(x, np.zeros((2, 3, 3, 3), np.float32), np.array([1.5, -2.0], np.float32))
        assert np.all(out[:, 0] == 1.5) and np.all(out[:, 1] == -2.0)

    def test_matches_direct_loops(self, rng):
        x = rng.standard_normal((1, 3, 4, 4)).astype(np.float32)
        w = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(2).astype(np.float32)
        np.testing.assert_allclose(conv2d(x, w, b), direct_conv2d(x, w, b), atol=1e-5)

    def test_shape_mismatch_names_both_shapes(self):
        layer = Conv2D(3, 4, 3, rng=make_rng(0))
        with pytest.raises(ValueError, match=r"\(1, 2, 4, 4\).*\(4, 3, 3, 3\)"):
            layer.forward(np.zeros((1, 2, 4, 4), np.float32))

    def test_param_count(self):
        layer = Conv2D(5, 7, 3, rng=make_rng(0))
        assert sum(p.size for p in layer.params()) == (3 * 3 * 5 + 1) * 7

    def test_backward_zero_cotangent(self, rng):
        layer = Conv2D(3, 2, 3, rng=rng)
        out = layer.forward(rng.standard_normal((2, 3, 4, 4)).astype(np.float32))
        dx = layer.backward(np.zeros_like(out))
        assert not dx.any() and not layer.weight.grad.any() and not layer.bias.grad.any()

    def test_backward_identity_1x1(self, rng):
        layer = conv_with(np.ones((1, 1, 1, 1), np.float32), np.zeros(1, np.float32))
        layer.forward(rng.standard_normal((2, 1, 3, 3)).astype(np.float32))
        g = rng.standard_normal((2, 1, 3, 3)).astype(np.float32)
        np.testing.assert_array_equal(layer.backward(g), g)

    def test_gradients_accumulate(self, rng):
        layer = Conv2D(2, 2, 3, rng=rng)
        x = rng.standard_normal((1, 2, 3, 3)).astype(np.float32)
        g = rng.standard_normal((1, 2, 3, 3)).astype(np.float32)
        layer.forward(x)
        layer.backward(g)
        once = layer.weight.grad.copy()
        layer.forward(x)
        layer.backward(g)
        np.testing.assert_allclose(layer.weight.grad, 2 * once, rtol=1e-6)

    def test_backward_rejects_wrong_shape(self, rng):
        layer = Conv2D(2, 2, 3, rng=rng)
        layer.forward(np.zeros((1, 2, 4, 4), np.float32))
        with pytest.raises(ValueError):
            layer.backward(np.zeros((1, 2, 3, 3), np.float32))

    @pytest.mark.parametrize("kernel", [1, 3])
    def test_finite_differences(self, kernel):
        err = gradient_check(Conv2D(3, 2, kernel, rng=make_rng(1)), (2, 3, 5, 5), make_rng(2))
        assert err <= 1e-3

    def test_float32_backward_vs_float64(self, rng):
        """The analytic gradient computed in float32 stays within 1e-3 of float64."""
        x = rng.standard_normal((1, 3, 6, 6))
        w = rng.standard_normal((4, 3, 3, 3)) * 0.3
        b = rng.standard_normal(4)
        g = rng.standard_normal((1, 4, 6, 6))
        l64 = conv_with(w, b)
        l32 = conv_with(w.astype(np.float32), b.astype(np.float32))
        l64.forward(x)
        l32.forward(x.astype(np.float32))
        d64 = l64.backward(g)
        d32 = l32.backward(g.astype(np.float32))
        assert np.max(np.abs(d32 - d64)) / np.max(np.abs(d64)) < 1e-3
        assert np.max(np.abs(l32.weight.grad - l64.weight.grad)) / np.max(np.abs(l64.weight.grad)) < 1e-3


def test_relu_examples(rng):
    relu = ReLU()
    neg = -np.abs(rng.standard_normal((1, 2, 3, 3))) - 0.1
    assert not relu.forward(neg).any()
    pos = -neg
    np.testing.assert_array_equal(relu.forward(pos), pos)


def test_relu_finite_differences():
    x = make_rng(3).standard_normal((2, 3, 4, 4))
    x = np.where(np.abs(x) < 1e-2, 0.5, x)
    assert gradient_check(ReLU(), x.shape, make_rng(4), x=x) <= 1e-3


class TestMaxPool:
    def test_constant(self):
        np.testing.assert_array_equal(MaxPool2().forward(np.full((1, 2, 4, 6), 3.0)), np.full((1, 2, 2, 3), 3.0))

    def test_single_window(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])[None, None].repeat(3, axis=1)
        np.testing.assert_array_equal(MaxPool2().forward(x), np.full((1, 3, 1, 1), 4.0))

    def test_brute_force(self, rng):
        x = rng.standard_normal((1, 1, 4, 4))
        expected = np.array([[x[0, 0, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max() for j in range(2)] for i in range(2)])
        np.testing.assert_array_equal(MaxPool2().forward(x)[0, 0], expected)

    def test_tie_routes_to_first(self):
        pool = MaxPool2()
        pool.forward(np.ones((1, 1, 2, 2)))
        np.testing.assert_array_equal(pool.backward(np.ones((1, 1, 1, 1)))[0, 0], [[1, 0], [0, 0]])

    def test_odd_size_rejected(self):
        with pytest.raises(ValueError, match="even"):
            MaxPool2().forward(np.zeros((1, 1, 3, 4)))

    def test_finite_differences(self):
        assert gradient_check(MaxPool2(), (2, 2, 4, 6), make_rng(5)) <= 1e-3

    @given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_inverts_duplication_upsample(self, c, h, w, seed):
        pooled = np.random.default_rng(seed).standard_normal((1, c, h, w))
        up = pooled.repeat(2, axis=2).repeat(2, axis=3)
        np.testing.assert_array_equal(MaxPool2().forward(up), pooled)


class TestGlobalPool:
    @pytest.mark.parametrize("mode", ["avg", "max"])
    def test_constant(self, mode):
        np.testing.assert_allclose(GlobalPool(mode).forward(np.full((2, 3, 4, 5), 1.25)), np.full((2, 3, 1, 1), 1.25))

    def test_values(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])[None, None]
        assert GlobalPool("avg").forward(x).item() == 2.5
        assert GlobalPool("max").forward(x).item() == 4.0

    def test_avg_backward_spreads_evenly(self):
        pool = GlobalPool("avg")
        pool.forward(np.zeros((1, 2, 3, 4)))
        g = np.array([6.0, -12.0]).reshape(1, 2, 1, 1)
        dx = pool.backward(g)
        np.testing.assert_allclose(dx[0, 0], 0.5)
        np.testing.assert_allclose(dx[0, 1], -1.0)

    def test_max_tie_routes_to_first(self):
        pool = GlobalPool("max")
        pool.forward(np.ones((1, 1, 2, 2)))
        np.testing.assert_array_equal(pool.backward(np.ones((1, 1, 1, 1)))[0, 0], [[1, 0], [0, 0]])

    @pytest.mark.parametrize("mode", ["avg", "max"])
    def test_finite_differences(self, mode):
        assert gradient_check(GlobalPool(mode), (2, 3, 3, 4), make_rng(6)) <= 1e-3


class TestDense:
    def test_identity(self, rng):
        layer = Dense(4, 4)
        layer.weight.value = np.eye(4, dtype=np.float32)
        x = rng.standard_normal((3, 4)).astype(np.float32)
        np.testing.assert_array_equal(layer.forward(x), x)

    def test_zero_input_gives_bias(self):
        layer = Dense(5, 3, rng=make_rng(0))
        layer.bias.value = np.array([1.0, 2.0, 3.0], np.float32)
        np.testing.assert_array_equal(layer.forward(np.zeros((2, 5), np.float32)), [[1, 2, 3], [1, 2, 3]])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            Dense(5, 3).forward(np.zeros((2, 4)))

    def test_param_count(self):
        assert sum(p.size for p in Dense(10, 7).params()) == 11 * 7

    def test_finite_differences(self):
        assert gradient_check(Dense(12, 5, rng=make_rng(1)), (3, 12), make_rng(2)) <= 1e-3

    def test_bias_only_layer_is_exact(self):
        layer = Dense(4, 3)  # zero weights: the output depends on the bias only
        assert gradient_check(layer, (2, 4), make_rng(3)) <= 1e-6


class TestDropout:
    def test_rate_zero_is_identity(self, rng):
        x = rng.standard_normal((4, 6))
        for training in (True, False):
            np.testing.assert_array_equal(Dropout(0.0, make_rng(0)).forward(x, training=training), x)

    def test_inference_identity(self, rng):
        x = rng.standard_normal((4, 6)).astype(np.float32)
        out = Dropout(0.7, make_rng(0)).forward(x, training=False)
        assert out is x

    def test_mean_preserved(self):
        out = Dropout(0.5, make_rng(2024)).forward(np.ones((1, 100_000), np.float32), training=True)
        assert 0.97 <= out.mean() <= 1.03
        assert set(np.unique(out)) == {0.0, 2.0}

    def test_backward_uses_same_mask(self, rng):
        d = Dropout(0.5, make_rng(1))
        x = np.ones((2, 50))
        out = d.forward(x, training=True)
        np.testing.assert_array_equal(d.backward(np.ones_like(x)), out)

    def test_finite_differences_with_fixed_mask(self):
        assert gradient_check(Dropout(0.3, make_rng(4)), (3, 8), make_rng(5), training=True) <= 1e-3

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError):
            Dropout(1.0)


class TestSigmoidBCE:
    def test_zero_logit(self):
        loss, _ = sigmoid_bce(np.zeros((1, 1)), np.ones((1, 1)))
        assert loss == pytest.approx(0.693147, abs=1e-6)

    def test_saturation(self):
        loss, grad = sigmoid_bce(np.array([[40.0]], np.float32), np.ones((1, 1)))
        assert np.isfinite(loss) and loss < 1e-15
        loss, grad = sigmoid_bce(np.array([[-1000.0]]), np.zeros((1, 1)))
        assert np.isfinite(loss) and np.all(np.isfinite(grad))

    def test_gradient_formula(self, rng):
        z = rng.standard_normal((5, 1))
        y = np.array([[1], [0], [1], [1], [0]])
        _, grad = sigmoid_bce(z, y)
        np.testing.assert_allclose(grad, (1 / (1 + np.exp(-z)) - y) / 5)

    def test_finite_differences(self):
        labels = np.array([[1], [0], [1], [0]])
        assert gradient_check(BCELayer(labels), (4, 1), make_rng(7)) <= 1e-3

    def test_bad_label(self):
        with pytest.raises(ValueError, match="0 or 1"):
            sigmoid_bce(np.zeros((2, 1)), np.array([[1], [2]]))


def test_end_to_end_one_block_model():
    model = build_model(ModelConfig.default(1, input_size=8), make_rng(0))
    assert gradient_check(model, (2, 3, 8, 8), make_rng(1)) <= 1e-2
    assert gradient_check(model, (2, 3, 8, 8), make_rng(2), training=True) <= 1e-2


# -- properties -------------------------------------------------------------

layer_cases = st.sampled_from(["conv3", "conv1", "relu", "pool", "gavg", "gmax", "flatten", "dense"])


@given(layer_cases, st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_shape_algebra(kind, n, c, h2, w2, seed):
    rng = np.random.default_rng(seed)
    h, w = 2 * h2, 2 * w2
    layer = {
        "conv3": lambda: Conv2D(c, 3, 3, rng=rng),
        "conv1": lambda: Conv2D(c, 5, 1, rng=rng),
        "relu": ReLU,
        "pool": MaxPool2,
        "gavg": lambda: GlobalPool("avg"),
        "gmax": lambda: GlobalPool("max"),
        "flatten": Flatten,
        "dense": lambda: Dense(c * h * w, 4, rng=rng),
    }[kind]()
    x = rng.standard_normal((n, c, h, w)).astype(np.float32)
    out = layer.forward(x)
    assert out.shape == layer.output_shape(x.shape)
    assert np.all(np.isfinite(out))
    dx = layer.backward(np.ones_like(out))
    assert dx.shape == x.shape and np.all(np.isfinite(dx))


@given(st.sampled_from(["conv", "dense"]), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_linearity_without_bias(kind, a, b, seed):
    rng = np.random.default_rng(seed)
    if kind == "conv":
        layer, shape = Conv2D(2, 3, 3, rng=rng), (1, 2, 4, 4)
    else:
        layer, shape = Dense(6, 4, rng=rng), (2, 6)
    x = rng.standard_normal(shape).astype(np.float32)
    y = rng.standard_normal(shape).astype(np.float32)
    lhs = layer.forward(np.float32(a) * x + np.float32(b) * y)
    rhs = a * layer.forward(x) + b * layer.forward(y)
    scale = max(np.abs(rhs).max(), np.abs(lhs).max(), 1.0)
    assert np.abs(lhs - rhs).max() / scale <= 1e-4


def test_forward_backward_deterministic():
    def run():
        model = build_model(ModelConfig.default(1, input_size=8), make_rng(9))
        model.set_dropout_rng(make_rng(10))
        x = make_rng(11).standard_normal((3, 3, 8, 8)).astype(np.float32)
        out = model.forward(x, training=True)
        dx = model.backward(np.ones_like(out))
        return out, dx, [p.grad.copy() for p in model.params()]

    a, b = run(), run()
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    for ga, gb in zip(a[2], b[2]):
        np.testing.assert_array_equal(ga, gb)


def test_rng_streams_reproducible():
    np.testing.assert_array_equal(make_rng(42).random(10), make_rng(42).random(10))


def float32_cases():
    labels = np.array([[1], [0], [1], [0]])
    return {
        "conv3": (lambda: Conv2D(3, 2, 3, rng=make_rng(1)), (2, 3, 5, 5), False),
        "conv1": (lambda: Conv2D(3, 2, 1, rng=make_rng(1)), (2, 3, 5, 5), False),
        "relu": (ReLU, (2, 3, 4, 4), False),
        "maxpool": (MaxPool2, (2, 2, 4, 6), False),
        "gavg": (lambda: GlobalPool("avg"), (2, 3, 3, 4), False),
        "gmax": (lambda: GlobalPool("max"), (2, 3, 3, 4), False),
        "flatten": (Flatten, (2, 3, 2, 2), False),
        "dense": (lambda: Dense(12, 5, rng=make_rng(1)), (3, 12), False),
        "dropout": (lambda: Dropout(0.3, make_rng(4)), (3, 8), True),
        "bce": (lambda: BCELayer(labels), (4, 1), False),
    }


@pytest.mark.parametrize("kind", sorted(float32_cases()))
def test_float32_backward_against_float64_differences(kind):
    make, shape, training = float32_cases()[kind]
    assert gradient_check(make(), shape, make_rng(2), training=training, analytic_dtype=np.float32) <= 1e-3


@pytest.mark.parametrize("training", [False, True])
def test_float32_end_to_end(training):
    model = build_model(ModelConfig.default(1, input_size=8), make_rng(0))
    assert gradient_check(model, (2, 3, 8, 8), make_rng(1), training=training, analytic_dtype=np.float32) <= 1e-2
