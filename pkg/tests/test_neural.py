import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delearning.neural import (DenseNet, Sparsity, TrainConfig, TrainingError, forward, gradient_check, kl_divergence,
                               loss_and_gradients, loss_value, numeric_gradient_norm, train)


def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


class TestForward:
    def test_zero_net_outputs_half(self):
        net = DenseNet((3, 4, 2), [np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
        out, acts = forward(net, np.array([0.3, -2.0, 7.0]))
        np.testing.assert_array_equal(out, [0.5, 0.5])
        assert len(acts) == 3

    def test_saturation(self):
        net = DenseNet((1, 1), [np.zeros((1, 1))], [np.array([50.0])])
        assert forward(net, [0.0])[0][0] == pytest.approx(1.0, abs=1e-12)

    def test_matches_straight_line_evaluation(self, rng):
        net = DenseNet.initialize((3, 4, 2), 1.0, seed=8)
        net.biases = [rng.normal(size=4), rng.normal(size=2)]
        x = rng.normal(size=3)
        (W1, W2), (b1, b2) = net.weights, net.biases
        hidden = [_sig(sum(x[i] * W1[i, j] for i in range(3)) + b1[j]) for j in range(4)]
        expected = [_sig(sum(hidden[j] * W2[j, k] for j in range(4)) + b2[k]) for k in range(2)]
        np.testing.assert_allclose(forward(net, x)[0], expected, atol=1e-12, rtol=0)

    def test_pure(self, rng):
        net = DenseNet.initialize((5, 3, 1), 0.5, 1)
        X = rng.random((7, 5))
        before = [p.copy() for p in net.params()]
        a = forward(net, X)[0]
        b = forward(net, X)[0]
        np.testing.assert_array_equal(a, b)
        for p, q in zip(net.params(), before):
            np.testing.assert_array_equal(p, q)

    def test_bad_width(self):
        with pytest.raises(ValueError, match="expects 3"):
            forward(DenseNet.initialize((3, 1)), np.zeros(2))

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            DenseNet((2, 2), [np.zeros((3, 2))], [np.zeros(2)])

    def test_serialization_round_trip(self):
        net = DenseNet.initialize((4, 3, 2), 0.3, 2)
        back = DenseNet.from_dict(net.to_dict())
        for p, q in zip(net.params(), back.params()):
            np.testing.assert_array_equal(p, q)
        assert net.n_params == 4 * 3 + 3 + 3 * 2 + 2


class TestLosses:
    def test_mse_value(self):
        assert loss_value(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]), "mse") == 0.5

    def test_cross_entropy_value(self):
        v = loss_value(np.array([[0.8]]), np.array([[1.0]]), "cross_entropy")
        assert v == pytest.approx(-np.log(0.8))

    def test_unknown_loss(self):
        with pytest.raises(ValueError, match="unknown loss"):
            loss_value(np.zeros((1, 1)), np.zeros((1, 1)), "hinge")

    def test_kl_zero_at_target(self):
        np.testing.assert_allclose(kl_divergence(0.05, np.array([0.05])), [0.0], atol=1e-15)
        assert kl_divergence(0.05, np.array([0.5]))[0] > 0


class TestGradients:
    def test_small_mse_net(self):
        rng = np.random.default_rng(0)
        net = DenseNet.initialize((3, 5, 2), 0.5, 1)
        assert gradient_check(net, rng.random((4, 3)), rng.random((4, 2)), "mse") < 1e-4

    def test_cross_entropy_net(self):
        rng = np.random.default_rng(1)
        net = DenseNet.initialize((10, 6, 1), 0.5, 2)
        assert gradient_check(net, rng.random((5, 10)), rng.integers(0, 2, (5, 1)), "cross_entropy") < 1e-4

    def test_sparsity_term(self):
        rng = np.random.default_rng(2)
        net = DenseNet.initialize((6, 4, 6), 0.5, 3)
        X = rng.random((8, 6))
        assert gradient_check(net, X, X, "mse", Sparsity(0.05, 3.0)) < 1e-4

    def test_stationary_point(self):
        # constant target 0.5 with a zero net: every gradient vanishes
        net = DenseNet((2, 2, 1), [np.zeros((2, 2)), np.zeros((2, 1))], [np.zeros(2), np.zeros(1)])
        X = np.array([[0.1, 0.9], [0.4, 0.2]])
        T = np.full((2, 1), 0.5)
        _, grads = loss_and_gradients(net, X, T, "mse")
        assert max(float(np.abs(g).max()) for g in grads) == 0.0
        assert numeric_gradient_norm(net, X, T, "mse") < 1e-9

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from(["mse", "cross_entropy"]))
    def test_random_nets(self, seed, loss):
        rng = np.random.default_rng(seed)
        d, h, k = rng.integers(2, 6, size=3)
        net = DenseNet.initialize((d, h, k), 0.7, seed)
        net.biases = [rng.normal(0, 0.5, size=b.shape) for b in net.biases]
        X = rng.random((3, d))
        T = rng.integers(0, 2, (3, k)).astype(float)
        assert gradient_check(net, X, T, loss) < 1e-4


class TestTrain:
    def test_xor(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        y = np.array([[0], [1], [1], [0]], dtype=float)
        net = DenseNet.initialize((2, 4, 1), 1.0, seed=3)
        cfg = TrainConfig(learning_rate=2.0, momentum=0.9, epochs=3000, batch_size=4, seed=0)
        trained, hist = train(net, X, y, "mse", cfg)
        assert np.mean((forward(trained, X)[0] - y) ** 2) < 0.05
        assert hist[-1] < hist[0]

    def test_zero_learning_rate_is_identity(self, rng):
        net = DenseNet.initialize((3, 2, 1), 0.5, 0)
        X, y = rng.random((10, 3)), rng.random((10, 1))
        trained, hist = train(net, X, y, "mse", TrainConfig(learning_rate=0.0, epochs=5))
        for p, q in zip(net.params(), trained.params()):
            np.testing.assert_array_equal(p, q)
        assert len(set(hist)) == 1

    def test_deterministic(self, rng):
        X, y = rng.random((30, 4)), rng.integers(0, 2, (30, 1))
        cfg = TrainConfig(learning_rate=0.5, epochs=10, batch_size=7, seed=4)
        net = DenseNet.initialize((4, 3, 1), 0.1, 0)
        a, ha = train(net, X, y, "cross_entropy", cfg)
        b, hb = train(net, X, y, "cross_entropy", cfg)
        assert ha == hb
        for p, q in zip(a.params(), b.params()):
            np.testing.assert_array_equal(p, q)

    def test_input_not_mutated_and_callback(self, rng):
        net = DenseNet.initialize((2, 2, 1), 0.1, 0)
        w0 = net.weights[0].copy()
        seen = []
        train(net, rng.random((5, 2)), rng.random((5, 1)), "mse", TrainConfig(epochs=3),
              callback=lambda e, n: seen.append(e))
        np.testing.assert_array_equal(net.weights[0], w0)
        assert seen == [0, 1, 2]

    def test_non_finite_loss_raises(self):
        net = DenseNet((1, 1), [np.array([[np.nan]])], [np.zeros(1)])
        with pytest.raises(TrainingError, match="epoch 0"):
            train(net, np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]]), "mse", TrainConfig(epochs=3))

    def test_shape_errors(self):
        net = DenseNet.initialize((2, 1))
        with pytest.raises(ValueError):
            train(net, np.zeros((3, 2)), np.zeros((2, 1)), "mse", TrainConfig())
        with pytest.raises(ValueError):
            train(net, np.zeros((3, 2)), np.zeros((3, 1)), "l1", TrainConfig())

    @pytest.mark.parametrize("kw", [{"learning_rate": -1}, {"momentum": 1.0}, {"batch_size": 0}, {"init_std": -0.1}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)
