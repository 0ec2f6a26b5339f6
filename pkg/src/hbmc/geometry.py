"""Points and distance on the Poincare upper half-plane."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HyperbolicPoint:
    """A point z = (x, y) of the upper half-plane, y > 0."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"coordinates must be finite, got ({self.x}, {self.y})")
        if self.y <= 0.0:
            raise ValueError(f"y must be strictly positive, got {self.y}")

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


def hyperbolic_distance(z: HyperbolicPoint, z2: HyperbolicPoint) -> float:
    """Geodesic distance r with cosh(r) = (|x-x'|^2 + y^2 + y'^2) / (2 y y').

    Evaluated as r = 2 asinh( sqrt((dx^2 + dy^2) / (4 y y')) ), which is the
    same quantity but stays fully accurate when the acosh argument is near 1
    (nearby points), where direct acosh loses half the significant digits.
    """
    dx = z.x - z2.x
    dy = z.y - z2.y
    s = math.sqrt((dx * dx + dy * dy) / (4.0 * z.y * z2.y))
    return 2.0 * math.asinh(s)


def hyperbolic_distance_arrays(x, y, x2, y2):
    """Vectorized distance for coordinate arrays (same stable form)."""
    dx = np.asarray(x) - np.asarray(x2)
    dy = np.asarray(y) - np.asarray(y2)
    s = np.sqrt((dx * dx + dy * dy) / (4.0 * np.asarray(y) * np.asarray(y2)))
    return 2.0 * np.arcsinh(s)
