"""Forward evaluation, the feature/head split, and satisfaction checks."""

import numpy as np
import pytest

from boxrepair import (
    Activation,
    Box,
    Layer,
    LinearConstraint,
    Network,
    Property,
    classification_property,
    default_split,
)

from util import random_network


def identity_net(dim=2, layers=2):
    stack = tuple(
        Layer(np.eye(dim), np.zeros(dim), Activation.identity()) for _ in range(layers)
    )
    return Network(stack, 1)


class TestForward:
    def test_identity_layers(self):
        net = identity_net()
        x = np.array([0.3, -0.7])
        assert np.array_equal(net.forward(x), x)

    def test_relu_clamp(self):
        layers = (
            Layer([[1.0]], [-1.0], Activation.relu()),
            Layer([[1.0]], [0.0], Activation.identity()),
        )
        net = Network(layers, 1)
        assert net.forward(np.array([0.5]))[0] == 0.0
        assert net.forward(np.array([2.0]))[0] == pytest.approx(1.0)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(0)
        net = random_network(rng, [3, 5, 4, 2])
        xs = rng.normal(0, 1, (20, 3))
        batched = net.forward(xs)
        for i in range(20):
            assert np.allclose(batched[i], net.forward(xs[i]), atol=1e-12)

    def test_dimension_mismatch(self):
        net = identity_net()
        with pytest.raises(ValueError, match="dimension"):
            net.forward(np.zeros(3))

    def test_piecewise_linear_on_stable_segment(self):
        rng = np.random.default_rng(5)
        net = random_network(rng, [4, 8, 8, 3])
        found = 0
        for _ in range(200):
            x = rng.normal(0, 1, 4)
            direction = rng.normal(0, 0.01, 4)
            x2 = x + direction
            signs_ok = True
            h1, h2 = x, x2
            for layer in net.layers:
                z1, z2 = layer.pre_activation(h1), layer.pre_activation(h2)
                if np.any(np.sign(z1) != np.sign(z2)) or min(np.abs(z1).min(), np.abs(z2).min()) < 1e-6:
                    signs_ok = False
                    break
                h1, h2 = layer.activation.apply(z1), layer.activation.apply(z2)
            if not signs_ok:
                continue
            found += 1
            lam = 0.37
            mid = net.forward(lam * x + (1 - lam) * x2)
            interp = lam * net.forward(x) + (1 - lam) * net.forward(x2)
            assert np.allclose(mid, interp, atol=1e-9)
        assert found >= 20


class TestSplit:
    def test_head_of_features_equals_forward(self):
        rng = np.random.default_rng(1)
        net = random_network(rng, [4, 6, 5, 3], split=2)
        for _ in range(1000):
            x = rng.normal(0, 1, 4)
            assert np.array_equal(net.forward_head(net.forward_features(x)), net.forward(x))

    def test_split_invariance(self):
        rng = np.random.default_rng(2)
        net = random_network(rng, [3, 7, 6, 5, 2], split=1)
        x = rng.normal(0, 1, (50, 3))
        base = net.forward(x)
        for k in range(1, net.num_layers):
            assert np.array_equal(net.with_split(k).forward(x), base)

    def test_feature_dim_at_first_split(self):
        rng = np.random.default_rng(3)
        net = random_network(rng, [3, 9, 6, 2], split=1)
        assert net.feature_dim == 9

    def test_identity_features(self):
        net = identity_net()
        x = np.array([1.5, -2.5])
        assert np.array_equal(net.forward_features(x), x)

    def test_default_split_counts_activation_layers(self):
        rng = np.random.default_rng(4)
        shallow = random_network(rng, [3, 5, 5, 5, 2])
        # head keeps exactly one activation layer: the last hidden one
        assert default_split(shallow.layers) == 2
        deep = random_network(rng, [3] + [4] * 9 + [2])
        assert default_split(deep.layers) == 7

    def test_split_bounds_validated(self):
        rng = np.random.default_rng(5)
        with pytest.raises(ValueError):
            random_network(rng, [2, 3, 2], split=0)
        with pytest.raises(ValueError):
            random_network(rng, [2, 3, 2], split=3)

    def test_final_activation_must_be_identity(self):
        with pytest.raises(ValueError, match="identity"):
            Network(
                (
                    Layer([[1.0]], [0.0], Activation.relu()),
                    Layer([[1.0]], [0.0], Activation.relu()),
                ),
                1,
            )

    def test_chaining_validated(self):
        with pytest.raises(ValueError, match="chain"):
            Network(
                (
                    Layer(np.ones((3, 2)), np.zeros(3), Activation.relu()),
                    Layer(np.ones((1, 4)), np.zeros(1), Activation.identity()),
                ),
                1,
            )


class TestSatisfies:
    def test_positive_output(self):
        net = identity_net(1)
        prop = Property(Box.point([0.5]), (LinearConstraint([1.0], 0.0),))
        assert net.satisfies(np.array([0.5]), prop)

    def test_negative_output(self):
        net = identity_net(1)
        prop = Property(Box.point([-0.5]), (LinearConstraint([1.0], 0.0),))
        assert not net.satisfies(np.array([-0.5]), prop)

    def test_argmax_encoding(self):
        net = identity_net(3)
        prop = classification_property([0.0] * 3, 1, 3)
        assert net.satisfies(np.array([0.1, 0.9, 0.3]), prop)
        assert not net.satisfies(np.array([0.95, 0.9, 0.3]), prop)
        # ties count as satisfied because constraints use >=
        assert net.satisfies(np.array([0.9, 0.9, 0.3]), prop)


class TestActivation:
    def test_leaky_slope_validated(self):
        with pytest.raises(ValueError):
            Activation.leaky_relu(1.5)
        with pytest.raises(ValueError):
            Activation.leaky_relu(0.0)

    def test_subgradients_at_kinks(self):
        z = np.array([0.0])
        assert Activation.relu().grad(z)[0] == 0.0
        assert Activation.leaky_relu(0.2).grad(z)[0] == 0.2

    def test_layer_bias_length_checked(self):
        with pytest.raises(ValueError, match="bias length"):
            Layer(np.ones((2, 2)), np.zeros(3), Activation.relu())
