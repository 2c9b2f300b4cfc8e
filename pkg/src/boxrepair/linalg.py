"""Dense vector/box primitives and the closed-form box optimizations.

Vectors and matrices are plain float64 numpy arrays throughout the
package; ``Box`` is the only structured type here. All functions are
pure, validate dimensions, and are cheap enough for inner loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Box",
    "as_vector",
    "as_matrix",
    "affine_min_over_box",
    "affine_argmax_over_box",
    "project_onto_box",
    "lp_norm",
]


def as_vector(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Coerce to a read-only 1-D float64 array with finite entries."""
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector entries must be finite (no NaN/Inf)")
    arr.setflags(write=False)
    return arr


def as_matrix(values) -> np.ndarray:
    """Coerce to a read-only 2-D float64 array with finite entries."""
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite (no NaN/Inf)")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box with per-dimension bounds.

    Degenerate dimensions (lower == upper) are allowed; a fully
    degenerate box denotes a single point.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = as_vector(self.lower)
        upper = as_vector(self.upper)
        if lower.shape != upper.shape:
            raise ValueError(
                f"bound length mismatch: {lower.shape[0]} vs {upper.shape[0]}"
            )
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper in every dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def point(cls, x) -> "Box":
        x = as_vector(x)
        return cls(x, x)

    @classmethod
    def centered(cls, center, radius: float) -> "Box":
        """The l-infinity ball of the given radius around center."""
        center = as_vector(center)
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        return cls(center - radius, center + radius)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def midpoint(self) -> np.ndarray:
        return (self.lower + self.upper) / 2.0

    def is_point(self) -> bool:
        return bool(np.all(self.lower == self.upper))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform samples from the box, shape (count, dim)."""
        u = rng.random((count, self.dim))
        return self.lower + u * (self.upper - self.lower)


def _check_dim(a: np.ndarray, box: Box) -> None:
    if a.shape[0] != box.dim:
        raise ValueError(f"dimension mismatch: vector {a.shape[0]} vs box {box.dim}")


def affine_min_over_box(a, b: float, box: Box) -> float:
    """Exact minimum of a.x + b over the box.

    Linear functions attain extrema at corners, so the minimum splits
    per coordinate: sum_i min(a_i * l_i, a_i * u_i) + b.
    """
    a = np.asarray(a, dtype=np.float64)
    _check_dim(a, box)
    return float(np.minimum(a * box.lower, a * box.upper).sum() + b)


def affine_argmax_over_box(a, box: Box) -> np.ndarray:
    """A maximizer of a.x over the box.

    Picks upper_i where a_i > 0 and lower_i where a_i < 0. Dimensions
    with a_i == 0 do not influence the objective; the box midpoint is
    returned there so callers relying on the result as a shifted center
    stay put along uninformative dimensions.
    """
    a = np.asarray(a, dtype=np.float64)
    _check_dim(a, box)
    return np.where(a > 0, box.upper, np.where(a < 0, box.lower, box.midpoint))


def project_onto_box(x, box: Box) -> np.ndarray:
    """Coordinate-wise clamp of x onto the box (nearest point in any l_p)."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, box)
    return np.clip(x, box.lower, box.upper)


def lp_norm(x, p: float) -> float:
    """The l_p norm for p >= 1; pass math.inf for the max norm."""
    if not (p >= 1):
        raise ValueError(f"lp_norm requires p >= 1, got {p}")
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    if math.isinf(p):
        return float(np.abs(x).max())
    return float(np.linalg.norm(x, ord=p))
