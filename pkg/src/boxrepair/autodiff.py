"""Reverse-mode gradients of the repair loss and the Adam optimizer.

Only feature-extractor parameters are differentiated and updated; head
layers pass through every step untouched (bit-identical objects), which
is what keeps certified feature-space boxes valid while the extractor
moves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .network import Layer, Network

__all__ = ["ParamGrads", "AdamState", "repair_loss", "backward", "adam_step"]

# tasks at distance below this are treated as solved: the Euclidean
# distance has no gradient at zero, so they contribute none
_SOLVED_DISTANCE = 1e-12

Task = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class ParamGrads:
    """Per-layer gradients for the feature extractor only."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weight/bias gradient counts disagree")


@dataclass(frozen=True, eq=False)
class AdamState:
    """First/second-moment accumulators mirroring the extractor shapes."""

    m_weights: tuple[np.ndarray, ...]
    v_weights: tuple[np.ndarray, ...]
    m_biases: tuple[np.ndarray, ...]
    v_biases: tuple[np.ndarray, ...]
    step: int
    lr: float
    beta1: float
    beta2: float
    epsilon: float

    @classmethod
    def initial(
        cls,
        net: Network,
        lr: float = 1e-2,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> "AdamState":
        mw = tuple(np.zeros_like(l.weights) for l in net.feature_layers)
        vw = tuple(np.zeros_like(l.weights) for l in net.feature_layers)
        mb = tuple(np.zeros_like(l.bias) for l in net.feature_layers)
        vb = tuple(np.zeros_like(l.bias) for l in net.feature_layers)
        return cls(mw, vw, mb, vb, 0, lr, beta1, beta2, epsilon)


def _stack_tasks(net: Network, tasks: Sequence[Task]):
    if not tasks:
        raise ValueError("task set must be nonempty")
    xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in tasks])
    hs = np.stack([np.asarray(h, dtype=np.float64) for _, h in tasks])
    if xs.shape[1] != net.input_dim:
        raise ValueError(f"task input dim {xs.shape[1]} != network {net.input_dim}")
    if hs.shape[1] != net.feature_dim:
        raise ValueError(f"task target dim {hs.shape[1]} != features {net.feature_dim}")
    return xs, hs


def repair_loss(net: Network, tasks: Sequence[Task]) -> float:
    """Mean Euclidean distance between extracted features and targets."""
    xs, hs = _stack_tasks(net, tasks)
    feats = net.forward_features(xs)
    return float(np.sqrt(((feats - hs) ** 2).sum(axis=1)).mean())


def backward(net: Network, tasks: Sequence[Task]) -> ParamGrads:
    """Exact reverse-mode gradient of repair_loss w.r.t. extractor params.

    Tasks are reduced in a fixed batched order, so results are
    run-to-run reproducible.
    """
    xs, hs = _stack_tasks(net, tasks)

    activations = [xs]
    pre_acts = []
    out = xs
    for layer in net.feature_layers:
        z = layer.pre_activation(out)
        pre_acts.append(z)
        out = layer.activation.apply(z)
        activations.append(out)

    diff = out - hs
    dist = np.sqrt((diff**2).sum(axis=1))
    scale = np.where(dist < _SOLVED_DISTANCE, 0.0, 1.0 / np.maximum(dist, _SOLVED_DISTANCE))
    delta = diff * (scale / len(tasks))[:, None]

    grad_w = [None] * net.split
    grad_b = [None] * net.split
    for idx in range(net.split - 1, -1, -1):
        layer = net.feature_layers[idx]
        delta_pre = delta * layer.activation.grad(pre_acts[idx])
        grad_w[idx] = delta_pre.T @ activations[idx]
        grad_b[idx] = delta_pre.sum(axis=0)
        if idx:
            delta = delta_pre @ layer.weights
    return ParamGrads(tuple(grad_w), tuple(grad_b))


def adam_step(
    state: AdamState, net: Network, grads: ParamGrads
) -> tuple[AdamState, Network]:
    """One bias-corrected Adam update of the extractor parameters.

    Returns a fresh state and network snapshot; head layers are the
    same objects before and after.
    """
    if len(grads.weights) != net.split:
        raise ValueError(f"expected {net.split} gradient layers, got {len(grads.weights)}")
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t

    new_layers = []
    mw, vw, mb, vb = [], [], [], []
    for layer, gw, gb, mwi, vwi, mbi, vbi in zip(
        net.feature_layers,
        grads.weights,
        grads.biases,
        state.m_weights,
        state.v_weights,
        state.m_biases,
        state.v_biases,
    ):
        if gw.shape != layer.weights.shape or gb.shape != layer.bias.shape:
            raise ValueError("gradient shapes do not mirror the layer")
        m_w = state.beta1 * mwi + (1.0 - state.beta1) * gw
        v_w = state.beta2 * vwi + (1.0 - state.beta2) * gw**2
        m_b = state.beta1 * mbi + (1.0 - state.beta1) * gb
        v_b = state.beta2 * vbi + (1.0 - state.beta2) * gb**2
        new_w = layer.weights - state.lr * (m_w / c1) / (np.sqrt(v_w / c2) + state.epsilon)
        new_b = layer.bias - state.lr * (m_b / c1) / (np.sqrt(v_b / c2) + state.epsilon)
        new_layers.append(Layer(new_w, new_b, layer.activation))
        mw.append(m_w)
        vw.append(v_w)
        mb.append(m_b)
        vb.append(v_b)

    new_state = AdamState(
        tuple(mw), tuple(vw), tuple(mb), tuple(vb),
        t, state.lr, state.beta1, state.beta2, state.epsilon,
    )
    return new_state, net.with_feature_layers(new_layers)
