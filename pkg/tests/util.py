"""Shared test helpers: random model builders and independent oracles."""

from __future__ import annotations

import numpy as np

from boxrepair import Activation, Box, Layer, LinearConstraint, Network

ACTIVATIONS = {
    "relu": Activation.relu(),
    "leaky_relu": Activation.leaky_relu(0.1),
    "tanh": Activation.tanh(),
}


def random_layers(rng, dims, activation="relu", scale=1.0):
    """Random dense stack; hidden layers use the given activation."""
    act = ACTIVATIONS[activation] if isinstance(activation, str) else activation
    layers = []
    for i in range(len(dims) - 1):
        a = act if i < len(dims) - 2 else Activation.identity()
        w = rng.normal(0.0, scale / np.sqrt(dims[i]), (dims[i + 1], dims[i]))
        b = rng.normal(0.0, 0.3, dims[i + 1])
        layers.append(Layer(w, b, a))
    return tuple(layers)


def random_network(rng, dims, activation="relu", split=None, scale=1.0):
    layers = random_layers(rng, dims, activation, scale)
    return Network(layers, split if split is not None else max(1, len(layers) - 1))


def random_box(rng, dim, center_scale=1.0, min_radius=0.05, max_radius=1.5):
    center = rng.normal(0.0, center_scale, dim)
    radius = rng.uniform(min_radius, max_radius, dim)
    return Box(center - radius, center + radius)


def random_constraints(rng, out_dim, count):
    return tuple(
        LinearConstraint(rng.normal(0.0, 1.0, out_dim), float(rng.normal(0.0, 0.5)))
        for _ in range(count)
    )


def apply_stack(layers, xs):
    """Forward a batch through a layer stack (oracle-side evaluation)."""
    out = np.asarray(xs, dtype=np.float64)
    for layer in layers:
        out = layer.apply(out)
    return out


def box_corners(box: Box) -> np.ndarray:
    """All 2^d corners, rows in bit order (bit i selects upper on dim i)."""
    d = box.dim
    bits = ((np.arange(2**d)[:, None] >> np.arange(d)) & 1).astype(bool)
    return np.where(bits, box.upper, box.lower)
