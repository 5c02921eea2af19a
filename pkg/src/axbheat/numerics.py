"""Shared numerical plumbing: quadrature settings, certificates, 1D Gauss-Legendre."""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class ToleranceNotMet(RuntimeError):
    """Raised when an adaptive scheme exhausts its subdivision budget."""

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class TailKind(str, enum.Enum):
    EXACT = "exact"
    HEURISTIC = "heuristic"
    NONE = "none"


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 8
    max_subdivisions: int = 12
    rel_tol: float = 1e-6
    abs_tol: float = 1e-12

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("order must be >= 2")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 0:
            raise ValueError("max_subdivisions must be >= 0")


@dataclass(frozen=True)
class Certificate:
    """A computed value with its quadrature error estimate and tail bound."""

    value: float
    error: float
    tail: float = 0.0
    tail_kind: TailKind = TailKind.NONE
    constants: dict = field(default_factory=dict)
    converged: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.error) and np.isfinite(self.tail)):
            raise ValueError("error estimate and tail bound must be finite")

    @property
    def bound(self):
        return self.error + self.tail


@lru_cache(maxsize=None)
def gauss_legendre(order):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def pairwise_sum(values):
    """Fixed-order tree reduction, independent of how the inputs were produced."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return 0.0
    while v.size > 1:
        if v.size % 2:
            v = np.append(v, 0.0)
        v = v[0::2] + v[1::2]
    return float(v[0])


def _gl_panels(f, lo, hi, x, w):
    """GL estimates on many panels at once. lo, hi are 1D arrays."""
    width = hi - lo
    pts = lo[:, None] + width[:, None] * x[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    return (vals * w[None, :]).sum(axis=1) * width


def adaptive_gl(f, a, b, spec=QuadratureSpec(), breakpoints=(), max_depth=None, raise_on_fail=True):
    """Globally adaptive 1D Gauss-Legendre integration of a vectorised f.

    Each panel is compared with the sum over its two halves; the worst panels
    are bisected until the summed differences meet the tolerance.
    Returns (value, error, converged).
    """
    x, w = gauss_legendre(spec.order)
    depth_cap = spec.max_subdivisions if max_depth is None else max_depth
    edges = np.unique(np.concatenate(([a, b], [p for p in breakpoints if a < p < b])))
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    coarse = _gl_panels(f, lo, hi, x, w)
    left = _gl_panels(f, lo, mid, x, w)
    right = _gl_panels(f, mid, hi, x, w)
    # heap entries: (-err, counter, lo, hi, left, right, depth)
    heap = []
    done_val, done_err = [], []
    count = 0
    for i in range(lo.size):
        err = abs(left[i] + right[i] - coarse[i])
        heap.append((-err, count, lo[i], hi[i], left[i], right[i], 0))
        count += 1
    heapq.heapify(heap)

    def totals():
        val = sum(e[4] + e[5] for e in heap) + sum(done_val)
        err = sum(-e[0] for e in heap) + sum(done_err)
        return val, err

    converged = True
    while heap:
        val, err = totals()
        if err <= max(spec.abs_tol, spec.rel_tol * abs(val)):
            break
        e = heapq.heappop(heap)
        if e[6] >= depth_cap:
            done_val.append(e[4] + e[5])
            done_err.append(-e[0])
            converged = False
            continue
        l0, h0, m0 = e[2], e[3], 0.5 * (e[2] + e[3])
        los = np.array([l0, 0.5 * (l0 + m0), m0, 0.5 * (m0 + h0)])
        his = np.array([0.5 * (l0 + m0), m0, 0.5 * (m0 + h0), h0])
        q = _gl_panels(f, los, his, x, w)
        for k, (cl, ch, parent) in enumerate(((l0, m0, e[4]), (m0, h0, e[5]))):
            a1, a2 = q[2 * k], q[2 * k + 1]
            heapq.heappush(heap, (-abs(a1 + a2 - parent), count, cl, ch, a1, a2, e[6] + 1))
            count += 1
    val, err = totals()
    if not converged and err <= max(spec.abs_tol, spec.rel_tol * abs(val)):
        converged = True
    if not converged and raise_on_fail:
        raise ToleranceNotMet("adaptive_gl: subdivision budget exhausted", val, err)
    return val, err, converged
