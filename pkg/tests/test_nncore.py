import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispred.errors import DimensionError, LabelError, NumericError
from dispred.nncore import (
    AdamState,
    Dense,
    adam_step,
    bce_with_logits,
    bce_with_logits_grad,
    grad_check,
    make_rng,
    mse,
    mse_grad,
)


def test_rng_streams_are_reproducible_and_independent():
    a = make_rng(7, "x").random(5)
    b = make_rng(7, "x").random(5)
    c = make_rng(7, "y").random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


class TestDenseForward:
    def test_zero_weights_give_zero(self):
        layer = Dense(np.zeros((3, 4)), np.zeros(3), relu=True)
        y, _ = layer.forward(np.random.default_rng(0).normal(size=(5, 4)))
        assert np.all(y == 0)

    def test_identity_relu(self):
        layer = Dense(np.eye(2), np.zeros(2), relu=True)
        y, _ = layer.forward(np.array([[1.0, -2.0]]))
        np.testing.assert_array_equal(y, [[1.0, 0.0]])

    def test_eval_mode_ignores_dropout(self):
        rng = make_rng(0, "t")
        layer = Dense.init(6, 4, rng, relu=True, dropout=0.5)
        plain = Dense(layer.W, layer.b, relu=True)
        x = rng.normal(size=(3, 6))
        np.testing.assert_array_equal(layer.forward(x)[0], plain.forward(x)[0])

    def test_shape_mismatch(self):
        layer = Dense(np.zeros((3, 4)), np.zeros(3))
        with pytest.raises(DimensionError):
            layer.forward(np.zeros((2, 5)))

    def test_inverted_dropout_preserves_expectation(self):
        rng = make_rng(1, "drop")
        layer = Dense(np.eye(4), np.zeros(4), relu=False, dropout=0.5)
        x = np.array([[1.0, 2.0, 3.0, 4.0]])
        xs = np.repeat(x, 20000, axis=0)
        y, _ = layer.forward(xs, train=True, rng=rng)
        np.testing.assert_allclose(y.mean(axis=0), x[0], rtol=0.02)


class TestDenseBackward:
    def test_zero_upstream(self):
        rng = make_rng(0, "b")
        layer = Dense.init(5, 3, rng, relu=True)
        x = rng.normal(size=(4, 5))
        _, cache = layer.forward(x)
        dW, db, dx = layer.backward(cache, np.zeros((4, 3)))
        assert not dW.any() and not db.any() and not dx.any()

    def test_dead_unit_has_zero_weight_grad(self):
        W = np.array([[1.0, 1.0], [-1.0, -1.0]])
        layer = Dense(W, np.zeros(2), relu=True)
        _, cache = layer.forward(np.array([[1.0, 2.0], [0.5, 0.5]]))
        dW, _, _ = layer.backward(cache, np.ones((2, 2)))
        np.testing.assert_array_equal(dW[1], 0.0)

    def test_upstream_shape_checked(self):
        layer = Dense(np.zeros((3, 4)), np.zeros(3))
        _, cache = layer.forward(np.zeros((2, 4)))
        with pytest.raises(DimensionError):
            layer.backward(cache, np.zeros((2, 2)))

    @pytest.mark.parametrize("shape", [(3, 5, 4), (17, 32, 9), (64, 128, 33)])
    @pytest.mark.parametrize("relu", [False, True])
    def test_matches_finite_differences(self, shape, relu):
        n, d_in, d_out = shape
        rng = make_rng(n * d_in, "fd")
        layer = Dense.init(d_in, d_out, rng, relu=relu)
        layer.b[:] = rng.normal(size=d_out) * 0.1
        x = rng.normal(size=(n, d_in))
        target = rng.normal(size=(n, d_out))
        params = {"W": layer.W, "b": layer.b, "x": x}

        def loss_fn():
            y, cache = layer.forward(params["x"])
            loss = 0.5 * np.sum((y - target) ** 2)
            dW, db, dx = layer.backward(cache, y - target)
            return loss, {"W": dW, "b": db, "x": dx}

        assert grad_check(loss_fn, params, h=1e-5, max_coords=30, rng=rng) < 1e-4


class TestLosses:
    def test_mse_values(self):
        assert mse([[1.0, 2.0]], [[1.0, 2.0]]) == 0.0
        assert mse([[0.0, 2.0]], [[1.0, 1.0]]) == 1.0
        a, b = np.random.default_rng(0).normal(size=(2, 3, 4))
        assert mse(a, b) == mse(b, a)

    def test_mse_shape_error(self):
        with pytest.raises(DimensionError):
            mse(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_mse_grad_fd(self):
        rng = make_rng(3, "mse")
        x = rng.normal(size=(4, 5))
        params = {"xh": rng.normal(size=(4, 5))}
        err = grad_check(lambda: (mse(x, params["xh"]), {"xh": mse_grad(x, params["xh"])}), params)
        assert err < 1e-4

    def test_bce_values(self):
        assert bce_with_logits([0.0], [1]) == pytest.approx(math.log(2), abs=1e-12)
        assert bce_with_logits([40.0], [1]) == pytest.approx(0.0, abs=1e-15)
        assert np.isfinite(bce_with_logits([1e4, -1e4], [0, 1]))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
    def test_bce_symmetry(self, logits):
        l = np.array(logits)
        assert bce_with_logits(l, np.ones_like(l)) == pytest.approx(bce_with_logits(-l, np.zeros_like(l)), rel=1e-12, abs=1e-15)

    def test_bce_rejects_bad_labels(self):
        with pytest.raises(LabelError):
            bce_with_logits([0.0, 1.0], [0, 2])

    def test_bce_grad_fd(self):
        rng = make_rng(4, "bce")
        y = (rng.random(12) < 0.5).astype(float)
        params = {"l": rng.normal(size=12) * 3}
        err = grad_check(lambda: (bce_with_logits(params["l"], y), {"l": bce_with_logits_grad(params["l"], y)}), params)
        assert err < 1e-4


class TestAdam:
    def test_zero_grad_is_identity(self):
        p = {"w": np.array([1.0, -2.0, 3.0])}
        before = p["w"].copy()
        state = AdamState(lr=0.1)
        for _ in range(3):
            adam_step(p, {"w": np.zeros(3)}, state)
        np.testing.assert_array_equal(p["w"], before)

    def test_zero_lr_is_identity(self):
        p = {"w": np.array([1.0, -2.0])}
        before = p["w"].copy()
        adam_step(p, {"w": np.array([0.3, -5.0])}, AdamState(lr=0.0))
        np.testing.assert_array_equal(p["w"], before)

    def test_first_step_hand_trace(self):
        # m1 = 0.1*g, v1 = 0.001*g^2; bias-corrected: m_hat = g, v_hat = g^2
        g, lr, eps = 0.5, 0.1, 1e-8
        m_hat = (0.1 * g) / (1 - 0.9)
        v_hat = (0.001 * g * g) / (1 - 0.999)
        expected = 1.0 - lr * m_hat / (math.sqrt(v_hat) + eps)
        p = {"w": np.array([1.0])}
        state = AdamState(lr=lr)
        adam_step(p, {"w": np.array([g])}, state)
        assert state.t == 1
        assert p["w"][0] == pytest.approx(expected, abs=1e-15)
        assert p["w"][0] == pytest.approx(1.0 - lr * g / (abs(g) + eps), abs=1e-12)

    def test_second_moment_nonnegative(self):
        rng = make_rng(0, "adam")
        p = {"w": rng.normal(size=5)}
        state = AdamState()
        for _ in range(10):
            adam_step(p, {"w": rng.normal(size=5)}, state)
        assert (state.v["w"] >= 0).all()


class TestGradCheck:
    def test_quadratic(self):
        params = {"w": np.array([3.0])}
        err = grad_check(lambda: (float(params["w"][0] ** 2), {"w": 2 * params["w"]}), params)
        assert err < 1e-8

    def test_constant_loss(self):
        params = {"w": np.array([1.0, 2.0])}
        assert grad_check(lambda: (5.0, {"w": np.zeros(2)}), params) == 0.0

    def test_non_finite_loss(self):
        params = {"w": np.array([1.0])}
        with pytest.raises(NumericError):
            grad_check(lambda: (float("nan"), {"w": np.zeros(1)}), params)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
def test_forward_backward_finite(n, d_in, d_out, seed):
    rng = make_rng(seed, "finite")
    layer = Dense.init(d_in, d_out, rng, relu=True)
    x = rng.normal(size=(n, d_in)) * 100
    y, cache = layer.forward(x)
    grads = layer.backward(cache, np.ones_like(y))
    assert np.all(np.isfinite(y))
    assert all(np.all(np.isfinite(g)) for g in grads)
