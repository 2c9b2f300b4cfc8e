"""Certified proxy-box synthesis in feature space.

Searches for an l-infinity box that provably maps into a property's
valid output set under the classifier head. Starting from an initial
center, each step bounds all constraints over the current box; if any
may be violated, the center jumps to the in-box maximizer of the summed
violated-constraint bound coefficients and the box is re-bounded. A box
whose every constraint lower bound is nonnegative is certified: each of
its points satisfies the property's output constraints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .bounds import BoundMode, linear_lower_bounds
from .linalg import Box, affine_argmax_over_box, as_vector
from .network import Layer
from .properties import Property

__all__ = ["ProxyBox", "synthesize_proxy_box"]

StepHook = Callable[[int, np.ndarray, np.ndarray], None]


@dataclass(frozen=True, eq=False)
class ProxyBox:
    """Feature-space box certified to lie inside the head's preimage."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center))
        if self.radius <= 0:
            raise ValueError("proxy box radius must be positive")

    def as_box(self) -> Box:
        return Box.centered(self.center, self.radius)


def synthesize_proxy_box(
    head: Sequence[Layer],
    center: np.ndarray,
    prop: Property,
    radius: float,
    max_iters: int,
    mode: BoundMode = BoundMode.BACKWARD,
    on_step: Optional[StepHook] = None,
) -> Optional[ProxyBox]:
    """Iterative center shifting; None after max_iters failed attempts.

    The center trajectory is deterministic: ties in the shift direction
    resolve to the box midpoint, so a zero summed coefficient leaves a
    coordinate in place. Revisiting an exactly repeated center cannot
    make progress (the shift map is a function of the center alone) and
    aborts early as failure.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    head = tuple(head)
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (head[0].in_dim,):
        raise ValueError(
            f"center dimension {center.shape} does not match head input {head[0].in_dim}"
        )

    seen = set()
    box = Box.centered(center, radius)
    report = linear_lower_bounds(head, box, prop.constraints, mode)
    for iteration in range(max_iters):
        if on_step is not None:
            on_step(iteration, center, report.lower_values)
        if report.all_satisfied:
            return ProxyBox(center, radius)
        key = center.tobytes()
        if key in seen:
            return None
        seen.add(key)
        shift_direction = np.sum(
            [report.bounds[k].coeffs for k in report.violated], axis=0
        )
        center = affine_argmax_over_box(shift_direction, box)
        box = Box.centered(center, radius)
        report = linear_lower_bounds(head, box, prop.constraints, mode)
    return None
