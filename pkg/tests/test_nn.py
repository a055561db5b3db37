import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from beamtrack.errors import DomainError, NumericError, ShapeError
from beamtrack.nn import (
    LSTM,
    Conv2d,
    Dense,
    GlobalAvgPool,
    LossGraph,
    LSTMParams,
    Param,
    ReLU,
    ResidualBlock,
    Sequential,
    adam_update,
    conv2d,
    conv2d_backward,
    gradient_check,
    lstm_step,
    lstm_step_backward,
    numeric_gradient,
    randomize_biases,
    softmax,
    softmax_cross_entropy,
)
from beamtrack.nn.gradcheck import kink_margin, max_relative_error


def projection_loss(R):
    """Linear readout sum(y * R); its gradient w.r.t. y is R."""

    def loss(y, _target=None):
        return float(np.sum(y * R)), R

    return loss


def check_layer(layer, x, seed=0, tol=1e-6):
    rng = np.random.default_rng(seed)
    y = layer.forward(x)
    layer.clear_cache()
    R = rng.standard_normal(y.shape)
    graph = LossGraph(layer, projection_loss(R))
    err_params = gradient_check(graph, (x, None), 1e-5)
    # input gradient
    y = layer.forward(x)
    dx = layer.backward(R)
    layer.clear_cache()

    def f(xx):
        out = float(np.sum(layer.forward(xx) * R))
        layer.clear_cache()
        return out

    err_input = max_relative_error(dx, numeric_gradient(f, x.copy(), 1e-5))
    return err_params, err_input


class TestConv2d:
    def test_ones_times_two(self):
        y, _ = conv2d(np.ones((1, 3, 3)), np.full((1, 1, 1, 1), 2.0), np.zeros(1))
        np.testing.assert_array_equal(y, np.full((1, 3, 3), 2.0))

    def test_identity_kernel(self):
        x = np.random.default_rng(3).standard_normal((1, 4, 5))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        y, _ = conv2d(x, w, np.zeros(1), stride=1, pad=1)
        np.testing.assert_array_equal(y, x)

    def test_cross_correlation_no_flip(self):
        x = np.arange(9.0).reshape(1, 3, 3)
        w = np.arange(9.0).reshape(1, 1, 3, 3)
        y, _ = conv2d(x, w, np.zeros(1))
        assert y.shape == (1, 1, 1)
        assert y[0, 0, 0] == float(np.sum(np.arange(9.0) ** 2))

    def test_output_size(self):
        y, _ = conv2d(np.zeros((2, 3, 7, 9)), np.zeros((4, 3, 3, 3)), np.zeros(4), stride=2, pad=1)
        assert y.shape == (2, 4, 4, 5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            conv2d(np.zeros((2, 5, 5)), np.zeros((1, 3, 3, 3)), np.zeros(1))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        y, cache = conv2d(x, w, b, 1, 1)
        R = rng.standard_normal(y.shape)
        dx, dw, db = conv2d_backward(R, cache)

        def loss_x(xx):
            return float(np.sum(conv2d(xx, w, b, 1, 1)[0] * R))

        def loss_w(ww):
            return float(np.sum(conv2d(x, ww, b, 1, 1)[0] * R))

        def loss_b(bb):
            return float(np.sum(conv2d(x, w, bb, 1, 1)[0] * R))

        assert max_relative_error(dx, numeric_gradient(loss_x, x.copy())) < 1e-6
        assert max_relative_error(dw, numeric_gradient(loss_w, w.copy())) < 1e-6
        assert max_relative_error(db, numeric_gradient(loss_b, b.copy())) < 1e-6

    @pytest.mark.parametrize("stride,pad,k", [(2, 1, 3), (1, 0, 1), (2, 0, 1), (3, 2, 3)])
    def test_layer_gradients_strided(self, stride, pad, k):
        rng = np.random.default_rng(stride * 10 + pad)
        layer = Conv2d(3, 4, k, stride, pad, rng)
        layer.bias.value[:] = rng.standard_normal(4)
        err_p, err_x = check_layer(layer, rng.standard_normal((2, 3, 7, 6)))
        assert err_p < 1e-6 and err_x < 1e-6


class TestLayers:
    def test_relu_gradients(self):
        x = np.random.default_rng(0).standard_normal((3, 7))
        _, err_x = check_layer(ReLU(), x)
        assert err_x < 1e-6

    def test_dense_gradients(self):
        rng = np.random.default_rng(1)
        layer = Dense(5, 4, rng)
        err_p, err_x = check_layer(layer, rng.standard_normal((3, 5)))
        assert err_p < 1e-6 and err_x < 1e-6

    def test_pool_gradients(self):
        x = np.random.default_rng(2).standard_normal((2, 3, 4, 5))
        _, err_x = check_layer(GlobalAvgPool(), x)
        assert err_x < 1e-6

    @pytest.mark.parametrize("c_in,c_out,stride", [(3, 3, 1), (3, 5, 2), (2, 4, 1)])
    def test_residual_gradients(self, c_in, c_out, stride):
        rng = np.random.default_rng(c_in + c_out)
        block = ResidualBlock(c_in, c_out, stride, rng)
        for p in block.params():
            if p.name.endswith("bias"):
                p.value[:] = 0.1 * rng.standard_normal(p.shape)
        err_p, err_x = check_layer(block, rng.standard_normal((2, c_in, 6, 7)))
        assert err_p < 1e-6 and err_x < 1e-6

    def test_zero_inner_residual_is_identity(self):
        x = np.random.default_rng(5).standard_normal((2, 4, 6, 6))
        block = ResidualBlock(4, 4, 1, np.random.default_rng(0), zero_inner=True)
        np.testing.assert_array_equal(block.forward(x), x)

    def test_projection_when_channels_differ(self):
        block = ResidualBlock(4, 8, 2, np.random.default_rng(0))
        assert block.shortcut is not None
        assert block.output_shape((4, 10, 10)) == (8, 5, 5)

    def test_sequential_shapes(self):
        net = Sequential([Conv2d(2, 3, 3, 1, 1, np.random.default_rng(0)), ReLU(), GlobalAvgPool(), Dense(3, 2)])
        assert net.output_shape((2, 5, 5)) == (2,)
        with pytest.raises(ShapeError):
            net.output_shape((3, 5, 5))

    def test_non_finite_forward_trips(self):
        layer = Dense(2, 2, np.random.default_rng(0))
        with pytest.raises(NumericError):
            layer.forward(np.array([[np.inf, 0.0]]))

    def test_forward_is_deterministic(self):
        def run():
            rng = np.random.default_rng(42)
            net = Sequential([Conv2d(2, 4, 3, 2, 1, rng), ReLU(), ResidualBlock(4, 4, 1, rng), GlobalAvgPool()])
            return net.forward(np.random.default_rng(1).standard_normal((3, 2, 9, 9)))

        assert run().tobytes() == run().tobytes()


class TestLSTM:
    def _params(self, rng, d, h):
        return LSTMParams(rng.standard_normal((d, 4 * h)) * 0.5, rng.standard_normal((h, 4 * h)) * 0.5,
                          rng.standard_normal(4 * h) * 0.5)

    def test_all_zero(self):
        p = LSTMParams(np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8))
        h, c, _ = lstm_step(np.ones(3), np.zeros(2), np.zeros(2), p)
        np.testing.assert_array_equal(h, 0.0)
        np.testing.assert_array_equal(c, 0.0)

    def test_saturated_forget_gate_keeps_cell(self):
        rng = np.random.default_rng(0)
        H = 4
        w_x = rng.standard_normal((6, 4 * H))
        w_h = rng.standard_normal((H, 4 * H))
        w_x[:, : 2 * H] = 0.0
        w_h[:, : 2 * H] = 0.0
        b = rng.standard_normal(4 * H)
        b[:H] = -50.0  # input gate closed
        b[H : 2 * H] = 50.0  # forget gate open
        c = rng.standard_normal(H)
        _, c_new, _ = lstm_step(rng.standard_normal(6), rng.standard_normal(H), c, LSTMParams(w_x, w_h, b))
        np.testing.assert_allclose(c_new, c, atol=1e-9)

    def test_shape_mismatch(self):
        p = LSTMParams(np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8))
        with pytest.raises(ShapeError):
            lstm_step(np.ones(4), np.zeros(2), np.zeros(2), p)

    def test_bptt_three_steps(self):
        rng = np.random.default_rng(7)
        D, H, T = 6, 4, 3
        p = self._params(rng, D, H)
        xs = rng.standard_normal((T, D))
        R = rng.standard_normal(H)

        def run(w_x, w_h, b, xs):
            q = LSTMParams(w_x, w_h, b)
            h, c = np.zeros(H), np.zeros(H)
            caches = []
            for t in range(T):
                h, c, cache = lstm_step(xs[t], h, c, q)
                caches.append(cache)
            return float(h @ R), caches

        _, caches = run(p.w_x, p.w_h, p.b, xs)
        dh, dc = R.copy(), np.zeros(H)
        gx = np.zeros_like(p.w_x)
        gh = np.zeros_like(p.w_h)
        gb = np.zeros_like(p.b)
        dxs = np.zeros_like(xs)
        for t in reversed(range(T)):
            dx, dh, dc, a, b_, c_ = lstm_step_backward(dh, dc, caches[t], p)
            dxs[t] = dx
            gx += a
            gh += b_
            gb += c_
        assert max_relative_error(gx, numeric_gradient(lambda w: run(w, p.w_h, p.b, xs)[0], p.w_x.copy())) < 1e-6
        assert max_relative_error(gh, numeric_gradient(lambda w: run(p.w_x, w, p.b, xs)[0], p.w_h.copy())) < 1e-6
        assert max_relative_error(gb, numeric_gradient(lambda w: run(p.w_x, p.w_h, w, xs)[0], p.b.copy())) < 1e-6
        assert max_relative_error(dxs, numeric_gradient(lambda x: run(p.w_x, p.w_h, p.b, x)[0], xs.copy())) < 1e-6

    def test_layer_gradients(self):
        rng = np.random.default_rng(3)
        layer = LSTM(5, 4, rng)
        err_p, err_x = check_layer(layer, rng.standard_normal((2, 3, 5)))
        assert err_p < 1e-6 and err_x < 1e-6


class TestSoftmaxCrossEntropy:
    def test_uniform(self):
        loss, _ = softmax_cross_entropy(np.zeros(64), 5)
        assert loss == pytest.approx(math.log(64), abs=1e-12)
        assert loss == pytest.approx(4.1589, abs=1e-4)

    def test_saturated(self):
        logits = np.zeros(10)
        logits[3] = 1000.0
        loss, _ = softmax_cross_entropy(logits, 3)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_gradient(self):
        logits = np.random.default_rng(0).standard_normal(8)
        loss, grad = softmax_cross_entropy(logits, 2)
        assert abs(grad.sum()) < 1e-12
        num = numeric_gradient(lambda z: softmax_cross_entropy(z, 2)[0], logits.copy())
        assert max_relative_error(grad, num) < 1e-6

    def test_batched_mean(self):
        rng = np.random.default_rng(1)
        logits = rng.standard_normal((4, 6))
        labels = np.array([0, 5, 2, 2])
        loss, grad = softmax_cross_entropy(logits, labels)
        per = [softmax_cross_entropy(logits[i], labels[i]) for i in range(4)]
        assert loss == pytest.approx(np.mean([l for l, _ in per]), abs=1e-14)
        np.testing.assert_allclose(grad, np.stack([g for _, g in per]) / 4, atol=1e-15)

    @pytest.mark.parametrize("label", [-1, 8])
    def test_label_out_of_range(self, label):
        with pytest.raises(DomainError):
            softmax_cross_entropy(np.zeros(8), label)

    @given(arrays(np.float64, st.integers(2, 70), elements=st.floats(-500, 500)), st.data())
    def test_properties(self, logits, data):
        label = data.draw(st.integers(0, logits.shape[0] - 1))
        assert abs(softmax(logits).sum() - 1.0) < 1e-12
        loss, grad = softmax_cross_entropy(logits, label)
        assert loss >= 0.0
        assert abs(grad.sum()) < 1e-12


class TestAdam:
    def test_zero_grad_leaves_params(self):
        p = Param("w", np.array([1.0, -2.0]))
        for _ in range(5):
            adam_update([p], [np.zeros(2)], lr=0.1)
        np.testing.assert_array_equal(p.value, [1.0, -2.0])
        np.testing.assert_array_equal(p.m, 0.0)
        assert p.step == 5

    def test_moments_decay_under_zero_grad(self):
        p = Param("w", np.array([0.0]))
        adam_update([p], [np.array([1.0])], lr=0.1)
        m1, v1 = p.m.copy(), p.v.copy()
        adam_update([p], [np.array([0.0])], lr=0.1)
        np.testing.assert_allclose(p.m, 0.9 * m1)
        np.testing.assert_allclose(p.v, 0.999 * v1)

    def test_constant_gradient_matches_scalar_iteration(self):
        g, lr, b1, b2, eps = 0.37, 1e-3, 0.9, 0.999, 1e-8
        p = Param("w", np.array([0.0]))
        x, m, v = 0.0, 0.0, 0.0
        last = None
        for t in range(1, 101):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            step = lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
            x -= step
            before = p.value[0]
            adam_update([p], [np.array([g])], lr, b1, b2, eps)
            last = before - p.value[0]
        assert p.value[0] == pytest.approx(x, rel=1e-12)
        assert last == pytest.approx(lr, rel=1e-6)

    def test_non_finite_gradient(self):
        p = Param("w", np.zeros(2))
        with pytest.raises(NumericError):
            adam_update([p], [np.array([np.nan, 0.0])])
        assert p.step == 0

    def test_deterministic_training(self):
        def run():
            rng = np.random.default_rng(9)
            net = Sequential([Dense(4, 8, rng), ReLU(), Dense(8, 3, rng)])
            data = np.random.default_rng(1).standard_normal((16, 4))
            labels = np.arange(16) % 3
            for _ in range(20):
                for p in net.params():
                    p.zero_grad()
                _, d = softmax_cross_entropy(net.forward(data), labels)
                net.backward(d)
                adam_update(net.params(), lr=1e-2)
            return b"".join(p.value.tobytes() for p in net.params())

        assert run() == run()


class _BrokenDense(Dense):
    def backward(self, dy):
        dx = super().backward(dy)
        self.weight.grad *= 1.5
        return dx


class TestGradientCheck:
    def test_linear_squared_loss(self):
        rng = np.random.default_rng(0)
        layer = Dense(4, 3, rng)
        x, target = rng.standard_normal((5, 4)), rng.standard_normal((5, 3))

        def sq(y, t):
            return float(0.5 * np.sum((y - t) ** 2)), y - t

        assert gradient_check(LossGraph(layer, sq), (x, target)) < 1e-9

    def test_detects_corrupted_backward(self):
        rng = np.random.default_rng(0)
        layer = _BrokenDense(4, 3, rng)
        x, labels = rng.standard_normal((5, 4)), np.array([0, 1, 2, 0, 1])
        assert gradient_check(LossGraph(layer, softmax_cross_entropy), (x, labels)) > 1e-2

    def test_random_subset_above_limit(self):
        rng = np.random.default_rng(0)
        layer = Dense(30, 20, rng)
        x, labels = rng.standard_normal((2, 30)), np.array([1, 4])
        err = gradient_check(LossGraph(layer, softmax_cross_entropy), (x, labels), max_params=50, seed=3)
        assert err < 1e-6

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000))
    def test_every_layer_below_threshold(self, seed):
        rng = np.random.default_rng(seed)
        net = Sequential([
            Conv2d(2, 3, 3, 2, 1, rng), ReLU(), ResidualBlock(3, 3, 1, rng), ReLU(),
            ResidualBlock(3, 4, 2, rng), GlobalAvgPool(), Dense(4, 5, rng),
        ])
        randomize_biases(net.params(), seed)
        x = rng.standard_normal((1, 2, 7, 8))
        graph, sample = LossGraph(net, softmax_cross_entropy), (x, np.array([seed % 5]))
        # well-posed draws only: no unit within reach of its kink, and no nonzero
        # gradient so small that one rounding step of the loss (~1e-16 / 2e-5)
        # already exceeds 1e-4 of it
        assume(kink_margin(net, lambda: net.forward(x)) > 1e-4)
        graph.loss_and_grad(sample)
        grads = np.concatenate([np.abs(p.grad).ravel() for p in net.params()])
        assume(grads[grads > 0].min() > 1e-6)
        assert gradient_check(graph, sample) < 1e-4
