"""Dense feedforward models with an explicit feature/head split.

A network is an immutable stack of affine layers with activations; the
split index partitions it into a feature extractor (the part repaired)
and a classifier head (frozen, so certified feature-space regions stay
valid while the extractor moves).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import as_matrix, as_vector
from .properties import Property

__all__ = ["Activation", "Layer", "Network", "default_split"]

_KINDS = ("relu", "leaky_relu", "tanh", "identity")


@dataclass(frozen=True)
class Activation:
    """Elementwise activation; slope is the leak of leaky_relu only."""

    kind: str
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "leaky_relu" and not (0.0 < self.slope < 1.0):
            raise ValueError(f"leaky_relu slope must be in (0, 1), got {self.slope}")
        if self.kind != "leaky_relu" and self.slope != 0.0:
            raise ValueError(f"{self.kind} takes no slope parameter")

    @classmethod
    def relu(cls) -> "Activation":
        return cls("relu")

    @classmethod
    def leaky_relu(cls, slope: float) -> "Activation":
        return cls("leaky_relu", slope)

    @classmethod
    def tanh(cls) -> "Activation":
        return cls("tanh")

    @classmethod
    def identity(cls) -> "Activation":
        return cls("identity")

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "leaky_relu":
            return np.where(z >= 0.0, z, self.slope * z)
        if self.kind == "tanh":
            return np.tanh(z)
        return z

    def grad(self, z: np.ndarray) -> np.ndarray:
        """Subgradient at kinks: 0 for relu, the leak for leaky_relu."""
        if self.kind == "relu":
            return (z > 0.0).astype(np.float64)
        if self.kind == "leaky_relu":
            return np.where(z > 0.0, 1.0, self.slope)
        if self.kind == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        return np.ones_like(z)


@dataclass(frozen=True, eq=False)
class Layer:
    """Affine map followed by an activation: act(weights @ x + bias)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: Activation

    def __post_init__(self):
        weights = as_matrix(self.weights)
        bias = as_vector(self.bias)
        if bias.shape[0] != weights.shape[0]:
            raise ValueError(
                f"bias length {bias.shape[0]} != weight rows {weights.shape[0]}"
            )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def pre_activation(self, x: np.ndarray) -> np.ndarray:
        if x.ndim == 1:
            return self.weights @ x + self.bias
        return x @ self.weights.T + self.bias

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.activation.apply(self.pre_activation(x))


def default_split(layers: Sequence[Layer]) -> int:
    """Split index keeping one activation layer in the head (two for
    networks deeper than 8 layers); clamped so both parts are nonempty."""
    target = 1 if len(layers) <= 8 else 2
    seen = 0
    k = len(layers) - 1
    for i in range(len(layers) - 1, -1, -1):
        if not layers[i].activation.is_identity:
            seen += 1
            k = i
            if seen == target:
                break
    return min(max(k, 1), len(layers) - 1)


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable layer stack split into feature extractor and head.

    layers[:split] is the feature extractor, layers[split:] the head;
    the final layer must emit raw logits (identity activation).
    """

    layers: tuple[Layer, ...]
    split: int

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(layers) < 2:
            raise ValueError("a network needs at least two layers to be split")
        for prev, cur in zip(layers, layers[1:]):
            if cur.in_dim != prev.out_dim:
                raise ValueError(
                    f"layer dims do not chain: {prev.out_dim} -> {cur.in_dim}"
                )
        if not 0 < self.split < len(layers):
            raise ValueError(
                f"split must satisfy 0 < split < {len(layers)}, got {self.split}"
            )
        if not layers[-1].activation.is_identity:
            raise ValueError("final layer must have identity activation (raw logits)")
        object.__setattr__(self, "layers", layers)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def feature_dim(self) -> int:
        return self.layers[self.split - 1].out_dim

    @property
    def feature_layers(self) -> tuple[Layer, ...]:
        return self.layers[: self.split]

    @property
    def head_layers(self) -> tuple[Layer, ...]:
        return self.layers[self.split :]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for one input vector or a batch of row vectors."""
        out = np.asarray(x, dtype=np.float64)
        self._check_input(out, self.input_dim)
        for layer in self.layers:
            out = layer.apply(out)
        return out

    def forward_features(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(x, dtype=np.float64)
        self._check_input(out, self.input_dim)
        for layer in self.feature_layers:
            out = layer.apply(out)
        return out

    def forward_head(self, h: np.ndarray) -> np.ndarray:
        out = np.asarray(h, dtype=np.float64)
        self._check_input(out, self.feature_dim)
        for layer in self.head_layers:
            out = layer.apply(out)
        return out

    def satisfies(self, x: np.ndarray, prop: Property) -> bool:
        """True iff every constraint of prop is >= 0 on forward(x)."""
        return prop.holds_on_output(self.forward(x))

    def with_split(self, split: int) -> "Network":
        return Network(self.layers, split)

    def with_feature_layers(self, feature_layers: Sequence[Layer]) -> "Network":
        """Snapshot with replaced extractor; head layer objects are shared."""
        if len(feature_layers) != self.split:
            raise ValueError(
                f"expected {self.split} feature layers, got {len(feature_layers)}"
            )
        return Network(tuple(feature_layers) + self.head_layers, self.split)

    @staticmethod
    def _check_input(x: np.ndarray, expected: int) -> None:
        dim = x.shape[-1] if x.ndim in (1, 2) else -1
        if dim != expected:
            raise ValueError(f"input dimension {dim} != expected {expected}")
