import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from expertgate.errors import DimensionError, ParameterError
from expertgate.nn_core import (
    Activation,
    DenseLayer,
    SgdConfig,
    cross_entropy_loss,
    distillation_loss,
    forward,
    gradient_check,
    sgd_step,
    softmax,
    squared_error,
    zero_velocity,
)


def layer(w, b, act):
    return DenseLayer(np.asarray(w, dtype=np.float32),
                      np.asarray(b, dtype=np.float32), act)


class TestForward:
    def test_identity_weights(self):
        l = layer([[1, 0], [0, 1]], [0, 0], Activation.IDENTITY)
        out = forward(l, np.array([[3.0, 4.0]], dtype=np.float32))
        np.testing.assert_allclose(out, [[3.0, 4.0]])

    def test_relu_clamps(self):
        l = layer([[1, 1]], [-5], Activation.RELU)
        out = forward(l, np.array([[2.0, 2.0]], dtype=np.float32))
        np.testing.assert_allclose(out, [[0.0]])

    def test_sigmoid_at_zero(self):
        l = layer([[1]], [0], Activation.SIGMOID)
        out = forward(l, np.array([[0.0]], dtype=np.float32))
        np.testing.assert_allclose(out, [[0.5]])

    def test_dimension_mismatch(self):
        l = layer([[1, 0]], [0], Activation.IDENTITY)
        with pytest.raises(DimensionError):
            forward(l, np.zeros((1, 3), dtype=np.float32))

    def test_identity_map_random(self):
        d = 6
        l = layer(np.eye(d), np.zeros(d), Activation.IDENTITY)
        x = np.random.default_rng(0).normal(size=(4, d)).astype(np.float32)
        np.testing.assert_allclose(forward(l, x), x, rtol=1e-6)


class TestCrossEntropy:
    def test_perfect_reconstruction(self):
        assert cross_entropy_loss(np.array([[1.0]]), np.array([[1.0 - 1e-9]])) < 1e-5

    def test_half_target(self):
        assert cross_entropy_loss(np.array([[0.5]]), np.array([[0.5]])) == pytest.approx(math.log(2))

    def test_uniform_prediction(self):
        loss = cross_entropy_loss(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
        assert loss == pytest.approx(math.log(2))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            cross_entropy_loss(np.zeros((1, 2)), np.zeros((1, 3)))

    @given(arrays(np.float64, (2, 3), elements=st.floats(0.01, 0.99)),
           arrays(np.float64, (2, 3), elements=st.floats(0.01, 0.99)))
    @settings(max_examples=50, deadline=None)
    def test_minimized_at_target(self, t, p):
        # CE(t, p) >= CE(t, t): the target's own entropy is the floor
        assert cross_entropy_loss(t, p) >= cross_entropy_loss(t, t) - 1e-12


class TestSquaredError:
    def test_equal_is_zero(self):
        x = np.ones((3, 4))
        assert squared_error(x, x) == 0.0

    def test_hand_values(self):
        assert squared_error(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]])) == pytest.approx(0.5)
        assert squared_error(np.array([[2.0, 2.0]]), np.array([[0.0, 0.0]])) == pytest.approx(4.0)

    @given(arrays(np.float64, (3, 2), elements=st.floats(-10, 10)),
           arrays(np.float64, (3, 2), elements=st.floats(-10, 10)))
    @settings(max_examples=50, deadline=None)
    def test_symmetric_nonnegative(self, a, b):
        assert squared_error(a, b) == pytest.approx(squared_error(b, a))
        assert squared_error(a, b) >= 0
        if squared_error(a, b) <= 1e-12:
            np.testing.assert_allclose(a, b, atol=1e-5)


class TestDistillation:
    def test_minimum_at_equality(self):
        logits = np.array([[1.0, -0.5, 0.2]])
        base = distillation_loss(logits, logits, 2.0)
        perturbed = distillation_loss(logits, logits + [[0.3, -0.1, 0.5]], 2.0)
        assert base < perturbed
        # minimum equals the soft target's own entropy
        q = softmax(logits / 2.0)
        assert base == pytest.approx(float(-np.sum(q * np.log(q))))

    def test_symmetric_zero_logits(self):
        target = softmax(np.array([[0.0, 0.0]]) / 3.0)
        np.testing.assert_allclose(target, [[0.5, 0.5]])

    def test_soft_target_hand_value(self):
        # logits [2, 0] at T=2 -> softmax([1, 0])
        target = softmax(np.array([[2.0, 0.0]]) / 2.0)
        np.testing.assert_allclose(target, [[0.7310586, 0.2689414]], atol=1e-6)

    def test_bad_temperature(self):
        with pytest.raises(ParameterError):
            distillation_loss(np.zeros((1, 2)), np.zeros((1, 2)), 0.0)


class TestSgd:
    def test_single_step(self):
        cfg = SgdConfig(learning_rate=0.1, momentum=0.0, epochs=1)
        p, v = sgd_step([np.array([1.0])], [np.array([1.0])], cfg, [np.array([0.0])])
        assert p[0][0] == pytest.approx(0.9)

    def test_zero_gradient_no_change(self):
        cfg = SgdConfig(learning_rate=0.1, momentum=0.0)
        p, _ = sgd_step([np.array([2.0, -1.0])], [np.zeros(2)], cfg, [np.zeros(2)])
        np.testing.assert_allclose(p[0], [2.0, -1.0])

    def test_momentum_accumulates(self):
        cfg = SgdConfig(learning_rate=0.1, momentum=0.9)
        p = [np.array([1.0])]
        v = zero_velocity(p)
        p, v = sgd_step(p, [np.array([1.0])], cfg, v)
        assert p[0][0] == pytest.approx(0.9)
        p, v = sgd_step(p, [np.array([1.0])], cfg, v)
        assert p[0][0] == pytest.approx(0.9 - 0.19)

    def test_decreases_convex_quadratic(self):
        # f(p) = 0.5 * lam * p^2, lr = 0.1 / lam
        lam = 4.0
        cfg = SgdConfig(learning_rate=0.1 / lam, momentum=0.0)
        p = [np.array([3.0])]
        v = zero_velocity(p)
        for _ in range(20):
            prev = 0.5 * lam * p[0][0] ** 2
            p, v = sgd_step(p, [lam * p[0]], cfg, v)
            assert 0.5 * lam * p[0][0] ** 2 < prev

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            SgdConfig(learning_rate=0.0)
        with pytest.raises(ParameterError):
            SgdConfig(epochs=0)
        with pytest.raises(ParameterError):
            SgdConfig(momentum=1.0)


class TestGradientCheck:
    def test_linear_model_squared_loss(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(3, 5))
        x = rng.normal(size=(8, 5))
        t = rng.normal(size=(8, 3))

        def loss():
            return float(np.mean((x @ w.T - t) ** 2))

        def grads():
            return [2.0 * (x @ w.T - t).T @ x / t.size]

        assert gradient_check([w], loss, grads, h=1e-5) < 1e-6

    def test_degenerate_zero_input(self):
        w = np.zeros((2, 3))
        x = np.zeros((4, 3))
        t = np.zeros((4, 2))

        def loss():
            s = 1.0 / (1.0 + np.exp(-(x @ w.T)))
            return float(np.mean((s - t) ** 2))

        def grads():
            s = 1.0 / (1.0 + np.exp(-(x @ w.T)))
            ds = 2.0 * (s - t) * s * (1 - s) / t.size
            return [ds.T @ x]

        assert np.isfinite(gradient_check([w], loss, grads))
