"""The group G = R^2 x| R^+ with its hyperbolic metric and Haar measures.

Points are (x1, x2, a) with a > 0; the product is
(x1, x2, a)(y1, y2, b) = (x1 + a y1, x2 + a y2, a b).
Integration always happens in (x1, x2, u = ln a), where the right Haar
measure is Lebesgue and the left one has density e^{-2u}.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .numerics import Certificate, QuadratureSpec, TailKind, adaptive_gl


class RangeError(ArithmeticError):
    """Dilation coordinate left the representable range."""


@dataclass(frozen=True)
class GroupElement:
    x1: float
    x2: float
    a: float

    def __post_init__(self):
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise ValueError("coordinates must be finite")
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError("dilation coordinate must be positive and finite")

    @property
    def u(self):
        return math.log(self.a)

    def __mul__(self, other):
        return multiply(self, other)

    def inverse(self):
        return inverse(self)

    def as_tuple(self):
        return (self.x1, self.x2, self.a)


IDENTITY = GroupElement(0.0, 0.0, 1.0)


class MeasureKind(enum.Enum):
    RIGHT = "right"  # a^-1 dx da
    LEFT = "left"  # a^-3 dx da

    def density_u(self, u):
        """Density with respect to dx1 dx2 du."""
        if self is MeasureKind.RIGHT:
            return np.ones_like(np.asarray(u, dtype=float))
        return np.exp(-2.0 * np.asarray(u, dtype=float))

    def density(self, a):
        """Density with respect to dx1 dx2 da."""
        a = np.asarray(a, dtype=float)
        return 1.0 / a if self is MeasureKind.RIGHT else a**-3


def multiply(x, y):
    a = x.a * y.a
    if not (math.isfinite(a) and a > 0):
        raise RangeError(f"dilation coordinate out of range: {x.a} * {y.a}")
    return GroupElement(x.x1 + x.a * y.x1, x.x2 + x.a * y.x2, a)


def inverse(x):
    return GroupElement(-x.x1 / x.a, -x.x2 / x.a, 1.0 / x.a)


def modular(x):
    return x.a**-2


def radius_u(z1, z2, u):
    """Distance from e to (z1, z2, e^u); vectorised.

    Uses sinh^2(r/2) = sinh^2(u/2) + |z|^2 e^{-u} / 4, which is the metric
    formula cosh r = (c + 1/c + |z|^2/c)/2 rewritten without cancellation.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    u = np.asarray(u, dtype=float)
    s2 = np.sinh(0.5 * u) ** 2 + 0.25 * (z1 * z1 + z2 * z2) * np.exp(-u)
    return 2.0 * np.arcsinh(np.sqrt(s2))


def radius(z1, z2, a):
    return radius_u(z1, z2, np.log(np.asarray(a, dtype=float)))


def distance_arrays(x1, x2, a, y1, y2, b):
    """Vectorised d(x, y) = r(x^-1 y)."""
    a = np.asarray(a, dtype=float)
    z1 = (np.asarray(y1, dtype=float) - x1) / a
    z2 = (np.asarray(y2, dtype=float) - x2) / a
    return radius_u(z1, z2, np.log(np.asarray(b, dtype=float) / a))


def distance(x, y):
    return float(distance_arrays(x.x1, x.x2, x.a, y.x1, y.x2, y.a))


def ball_volume_exact(r):
    return math.pi * (math.sinh(2.0 * r) - 2.0 * r)


def ball_volume(r, kind=MeasureKind.RIGHT, spec=QuadratureSpec()):
    """Measure of B(e, r) by quadrature over u of the exact horizontal disc areas.

    At height u the section of the ball is the disc |z|^2 <= 2 e^u (cosh r - cosh u).
    """
    if not 0 < r <= 30:
        raise ValueError("ball_volume needs 0 < r <= 30")

    def section(u):
        area = 2.0 * math.pi * np.exp(u) * (math.cosh(r) - np.cosh(u))
        return np.clip(area, 0.0, None) * kind.density_u(u)

    val, err, ok = adaptive_gl(section, -r, r, spec, breakpoints=(0.0,))
    return Certificate(float(val), float(err), 0.0, TailKind.NONE, converged=ok)
