"""Linear-relaxation bound propagation over dense layer stacks.

Given a layer stack, an input box, and linear output constraints, this
module produces for each constraint a sound affine lower bound on
coeffs . f(x) + bias as a function of the stack's input, plus its
concrete minimum over the box. Nonlinear activations are replaced by
two-sided linear envelopes and the constraint functional is substituted
backward layer by layer; positive coefficients pick up the lower
envelope line, negative ones the upper line.

Soundness is asserted in float64 without outward rounding; tests check
it to a 1e-6 tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .linalg import Box, affine_min_over_box, as_vector
from .network import Activation, Layer
from .properties import LinearConstraint

__all__ = [
    "BoundMode",
    "ActivationRelaxation",
    "AffineBound",
    "BoundReport",
    "PreActivationBounds",
    "relax_activation",
    "intermediate_bounds",
    "linear_lower_bounds",
]

# guards divisions on (numerically) degenerate pre-activation intervals
_TINY = 1e-12


class BoundMode(Enum):
    """How per-layer pre-activation intervals are obtained."""

    IBP = "ibp"
    BACKWARD = "backward"


@dataclass(frozen=True)
class ActivationRelaxation:
    """Two-sided linear envelope of one neuron on its input interval.

    For all z in [l, u]:
        lower_slope*z + lower_intercept <= act(z) <= upper_slope*z + upper_intercept
    """

    lower_slope: float
    lower_intercept: float
    upper_slope: float
    upper_intercept: float


@dataclass(frozen=True, eq=False)
class AffineBound:
    """Affine function coeffs . x + bias of a bounded stack's input."""

    coeffs: np.ndarray
    bias: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", as_vector(self.coeffs))
        object.__setattr__(self, "bias", float(self.bias))

    def evaluate(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return float(x @ self.coeffs + self.bias)
        return x @ self.coeffs + self.bias

    def minimum_over(self, box: Box) -> float:
        return affine_min_over_box(self.coeffs, self.bias, box)


@dataclass(frozen=True, eq=False)
class BoundReport:
    """Per-constraint affine lower bounds with concrete minima.

    violated holds the indices of constraints whose concrete lower bound
    is negative (possibly unsatisfied somewhere in the box); a bound of
    exactly zero counts as satisfied.
    """

    bounds: tuple[AffineBound, ...]
    lower_values: np.ndarray
    violated: tuple[int, ...]

    @property
    def all_satisfied(self) -> bool:
        return not self.violated


@dataclass(frozen=True, eq=False)
class PreActivationBounds:
    """Sound per-layer intervals of pre-activation values over a box."""

    lower: tuple[np.ndarray, ...]
    upper: tuple[np.ndarray, ...]


class _LayerRelaxation:
    """Vectorized envelope lines for every neuron of one layer."""

    __slots__ = ("lower_slope", "lower_intercept", "upper_slope", "upper_intercept")

    def __init__(self, ls, li, us, ui):
        self.lower_slope = ls
        self.lower_intercept = li
        self.upper_slope = us
        self.upper_intercept = ui


def _relu_like_envelope(l, u, leak):
    """Envelope for relu (leak=0) and leaky_relu, adaptive lower slope.

    Unstable neurons get the chord as upper line and a lower line
    through the origin whose slope snaps to 1 when u >= -l and to the
    leak otherwise (the area-minimizing choice).
    """
    stable_pos = l >= 0.0
    stable_neg = u <= 0.0
    unstable = ~(stable_pos | stable_neg)

    denom = np.where(unstable, u - l, 1.0)
    denom = np.where(np.abs(denom) < _TINY, _TINY, denom)
    chord_slope = np.where(unstable, (u - leak * l) / denom, 0.0)
    chord_icept = np.where(unstable, l * (leak - chord_slope), 0.0)

    us = np.where(stable_pos, 1.0, np.where(stable_neg, leak, chord_slope))
    ui = np.where(unstable, chord_icept, 0.0)
    ls = np.where(
        stable_pos, 1.0, np.where(stable_neg, leak, np.where(u >= -l, 1.0, leak))
    )
    li = np.zeros_like(l)
    return ls, li, us, ui


def _tanh_tangent(d):
    t = np.tanh(d)
    slope = 1.0 - t * t
    return slope, t - slope * d


def _tanh_chord(l, u, tl, tu):
    denom = np.maximum(u - l, _TINY)
    slope = (tu - tl) / denom
    return slope, tl - slope * l


def _tanh_envelope(l, u):
    """Envelope for tanh.

    Within one curvature regime the chord bounds the convex side and a
    midpoint tangent the other. On sign-crossing intervals the binding
    line is the tangent through the far endpoint, with its tangency
    point found by bisection; when no such tangency exists inside the
    interval the endpoint chord is already sound.
    """
    tl, tu = np.tanh(l), np.tanh(u)
    mid_slope, mid_icept = _tanh_tangent((l + u) / 2.0)
    chord_slope, chord_icept = _tanh_chord(l, u, tl, tu)

    tiny = (u - l) <= 1e-9
    concave = l >= 0.0  # tangents above, chords below
    convex = u <= 0.0  # chords above, tangents below
    mixed = ~(concave | convex) & ~tiny

    ls = np.where(concave, chord_slope, mid_slope)
    li = np.where(concave, chord_icept, mid_icept)
    us = np.where(convex, chord_slope, mid_slope)
    ui = np.where(convex, chord_icept, mid_icept)

    if np.any(mixed):
        ml, mu = l[mixed], u[mixed]
        mtl, mtu = tl[mixed], tu[mixed]
        mcs, mci = chord_slope[mixed], chord_icept[mixed]

        # upper line: tangent at d in [0, u] passing through (l, tanh l);
        # F(d) = tanh(d) + tanh'(d)(l - d) - tanh(l) increases in d
        def f_upper(d):
            slope, icept = _tanh_tangent(d)
            return slope * ml + icept - mtl

        slope_u, icept_u = _bisect_tangent(
            f_upper, np.zeros_like(mu), mu, pick_high=True
        )
        no_root = f_upper(mu) < 0.0
        slope_u = np.where(no_root, mcs, slope_u)
        icept_u = np.where(no_root, mci, icept_u)

        # lower line: tangent at d in [l, 0] passing through (u, tanh u);
        # H(d) = tanh(d) + tanh'(d)(u - d) - tanh(u) increases in d
        def f_lower(d):
            slope, icept = _tanh_tangent(d)
            return slope * mu + icept - mtu

        slope_l, icept_l = _bisect_tangent(
            f_lower, ml, np.zeros_like(ml), pick_high=False
        )
        no_root = f_lower(ml) >= 0.0
        slope_l = np.where(no_root, mcs, slope_l)
        icept_l = np.where(no_root, mci, icept_l)

        us = _scatter(us, mixed, slope_u)
        ui = _scatter(ui, mixed, icept_u)
        ls = _scatter(ls, mixed, slope_l)
        li = _scatter(li, mixed, icept_l)

    return ls, li, us, ui


def _bisect_tangent(f, lo, hi, pick_high, iters=80):
    """Root of the increasing tangency residual f on [lo, hi].

    pick_high selects the bracket side whose residual sign keeps the
    resulting line sound (>= 0 for upper lines, <= 0 for lower lines).
    """
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = f(mid) < 0.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return _tanh_tangent(hi if pick_high else lo)


def _scatter(base, mask, values):
    out = base.copy()
    out[mask] = values
    return out


def _relax_layer(activation: Activation, l: np.ndarray, u: np.ndarray):
    if activation.is_identity:
        return None
    if activation.kind == "relu":
        return _LayerRelaxation(*_relu_like_envelope(l, u, 0.0))
    if activation.kind == "leaky_relu":
        return _LayerRelaxation(*_relu_like_envelope(l, u, activation.slope))
    return _LayerRelaxation(*_tanh_envelope(l, u))


def relax_activation(activation: Activation, l: float, u: float) -> ActivationRelaxation:
    """Sound two-sided linear envelope of one neuron on [l, u]."""
    if l > u:
        raise ValueError(f"invalid interval: l={l} > u={u}")
    rel = _relax_layer(activation, np.array([float(l)]), np.array([float(u)]))
    if rel is None:
        return ActivationRelaxation(1.0, 0.0, 1.0, 0.0)
    return ActivationRelaxation(
        float(rel.lower_slope[0]),
        float(rel.lower_intercept[0]),
        float(rel.upper_slope[0]),
        float(rel.upper_intercept[0]),
    )


def _interval_affine(weights, bias, lo, hi):
    mid = (lo + hi) / 2.0
    rad = (hi - lo) / 2.0
    center = weights @ mid + bias
    spread = np.abs(weights) @ rad
    return center - spread, center + spread


def _ibp_pre_bounds(layers, box):
    lo, hi = box.lower, box.upper
    pre = []
    for layer in layers:
        zl, zu = _interval_affine(layer.weights, layer.bias, lo, hi)
        pre.append((zl, zu))
        # all supported activations are monotone nondecreasing
        lo, hi = layer.activation.apply(zl), layer.activation.apply(zu)
    return pre


def _backward_affine(layers, relaxations, coeffs, bias, lower):
    """Substitute a linear functional of layers[-1]'s post-activation
    back to the stack input. coeffs is (q, out_dim), bias is (q,)."""
    A = np.array(coeffs, dtype=np.float64)
    b = np.array(bias, dtype=np.float64)
    for j in range(len(layers) - 1, -1, -1):
        rel = relaxations[j]
        if rel is not None:
            pos = A > 0.0
            if lower:
                slope = np.where(pos, rel.lower_slope, rel.upper_slope)
                icept = np.where(pos, rel.lower_intercept, rel.upper_intercept)
            else:
                slope = np.where(pos, rel.upper_slope, rel.lower_slope)
                icept = np.where(pos, rel.upper_intercept, rel.lower_intercept)
            b = b + (A * icept).sum(axis=1)
            A = A * slope
        b = b + A @ layers[j].bias
        A = A @ layers[j].weights
    return A, b


def _concretize(A, b, box, lower):
    if lower:
        return np.minimum(A * box.lower, A * box.upper).sum(axis=1) + b
    return np.maximum(A * box.lower, A * box.upper).sum(axis=1) + b


def _propagate(layers, box, mode):
    """Pre-activation intervals and envelope lines for every layer."""
    ibp = _ibp_pre_bounds(layers, box)
    pre_lower, pre_upper, relaxations = [], [], []
    for i, layer in enumerate(layers):
        if mode is BoundMode.IBP or i == 0:
            zl, zu = ibp[i]  # the first layer's interval image is exact
        else:
            sub = layers[:i]
            al, bl = _backward_affine(sub, relaxations, layer.weights, layer.bias, True)
            au, bu = _backward_affine(sub, relaxations, layer.weights, layer.bias, False)
            zl = np.maximum(_concretize(al, bl, box, True), ibp[i][0])
            zu = np.minimum(_concretize(au, bu, box, False), ibp[i][1])
            zu = np.maximum(zu, zl)
        pre_lower.append(zl)
        pre_upper.append(zu)
        relaxations.append(_relax_layer(layer.activation, zl, zu))
    bounds = PreActivationBounds(tuple(pre_lower), tuple(pre_upper))
    return bounds, relaxations


def _check_stack(layers: Sequence[Layer], box: Box) -> None:
    if not layers:
        raise ValueError("cannot bound an empty layer stack")
    if layers[0].in_dim != box.dim:
        raise ValueError(
            f"dimension mismatch: box {box.dim} vs stack input {layers[0].in_dim}"
        )


def intermediate_bounds(
    layers: Sequence[Layer], box: Box, mode: BoundMode = BoundMode.BACKWARD
) -> PreActivationBounds:
    """Sound pre-activation intervals per layer over the box.

    Backward mode concretizes a full backward substitution per layer and
    intersects it with the interval-arithmetic result, so its intervals
    are never looser than IBP's.
    """
    layers = tuple(layers)
    _check_stack(layers, box)
    bounds, _ = _propagate(layers, box, mode)
    return bounds


def linear_lower_bounds(
    layers: Sequence[Layer],
    box: Box,
    constraints: Sequence[LinearConstraint],
    mode: BoundMode = BoundMode.BACKWARD,
) -> BoundReport:
    """Sound affine lower bound per constraint over the box.

    Each constraint functional coeffs . f(x) + bias is substituted
    backward through every layer; the concrete minimum of the resulting
    affine bound classifies the constraint as satisfied (>= 0) or
    possibly violated.
    """
    layers = tuple(layers)
    _check_stack(layers, box)
    if not constraints:
        raise ValueError("need at least one constraint to bound")
    out_dim = layers[-1].out_dim
    for c in constraints:
        if c.dim != out_dim:
            raise ValueError(
                f"constraint dimension {c.dim} != stack output {out_dim}"
            )

    _, relaxations = _propagate(layers, box, mode)
    C = np.stack([c.coeffs for c in constraints])
    d = np.array([c.bias for c in constraints])
    A, b = _backward_affine(layers, relaxations, C, d, lower=True)
    lower_values = _concretize(A, b, box, lower=True)
    bounds = tuple(AffineBound(A[k], float(b[k])) for k in range(len(constraints)))
    violated = tuple(int(k) for k in np.flatnonzero(lower_values < 0.0))
    return BoundReport(bounds, lower_values, violated)
