"""Input/output property specifications: the unit of repair.

A property pairs an input box with linear output constraints of the form
coeffs . f(x) + bias >= 0; the property holds when every constraint is
nonnegative on every point of the box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import Box, as_vector

__all__ = ["LinearConstraint", "Property", "classification_property"]


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    """One linear output constraint coeffs . y + bias >= 0."""

    coeffs: np.ndarray
    bias: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", as_vector(self.coeffs))
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    def margin(self, y: np.ndarray):
        """coeffs . y + bias; batched when y has sample rows."""
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            return float(y @ self.coeffs + self.bias)
        return y @ self.coeffs + self.bias


@dataclass(frozen=True, eq=False)
class Property:
    """Desired behavior: an input box plus linear output constraints."""

    input: Box
    constraints: tuple[LinearConstraint, ...]
    label: str = ""

    def __post_init__(self):
        constraints = tuple(self.constraints)
        if not constraints:
            raise ValueError("a property needs at least one constraint")
        dims = {c.dim for c in constraints}
        if len(dims) != 1:
            raise ValueError(f"constraint coefficient lengths disagree: {sorted(dims)}")
        object.__setattr__(self, "constraints", constraints)

    @property
    def output_dim(self) -> int:
        return self.constraints[0].dim

    @property
    def is_point(self) -> bool:
        return self.input.is_point()

    def point(self) -> np.ndarray:
        if not self.is_point:
            raise ValueError(f"property {self.label!r} is not a single point")
        return self.input.lower

    def holds_on_output(self, y: np.ndarray) -> bool:
        """True iff every constraint margin is >= 0 on the output y."""
        return all(c.margin(y) >= 0.0 for c in self.constraints)


def classification_property(
    x: Sequence[float] | np.ndarray,
    label: int,
    num_classes: int,
    name: str = "",
) -> Property:
    """Degenerate-box property stating that class `label` wins the argmax.

    Encodes one constraint e_label - e_j per class j (the j == label one
    is trivially satisfied); ties count as satisfied since margins use >=.
    """
    if not 0 <= label < num_classes:
        raise ValueError(f"label {label} outside [0, {num_classes})")
    constraints = []
    for j in range(num_classes):
        coeffs = np.zeros(num_classes)
        coeffs[label] += 1.0
        coeffs[j] -= 1.0
        constraints.append(LinearConstraint(coeffs, 0.0))
    return Property(Box.point(x), tuple(constraints), label=name or f"class{label}")
