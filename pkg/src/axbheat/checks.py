"""Seeded invariant suites shared by the CLI and the test-suite.

Each suite returns a dict of measured worst-case errors; pass/fail thresholds
live with the callers.
"""

from __future__ import annotations

import math

import numpy as np

from .group import GroupElement, MeasureKind, ball_volume, ball_volume_exact, distance_arrays, radius_u
from .kernels import (
    HEAT,
    POISSON,
    kernel_arrays,
    kernel_grad_arrays,
    kernel_sup_t_ru,
    profile,
    r_over_sinh,
)
from .numerics import QuadratureSpec


def sample_elements(rng, n, a_range=(1e-3, 1e3), x_range=1e3):
    a = np.exp(rng.uniform(math.log(a_range[0]), math.log(a_range[1]), n))
    return rng.uniform(-x_range, x_range, n), rng.uniform(-x_range, x_range, n), a


def _mul(x, y):
    return x[0] + x[2] * y[0], x[1] + x[2] * y[1], x[2] * y[2]


def _inv(x):
    return -x[0] / x[2], -x[1] / x[2], 1.0 / x[2]


def algebra_suite(rng, n=10_000):
    """Worst errors of the group laws and of left invariance of d.

    Group-law errors are relative to the size of the terms that were added,
    so cancellation in x1 + a y1 is not counted against the arithmetic.
    """
    x, y, z = (sample_elements(rng, n) for _ in range(3))
    lhs = _mul(_mul(x, y), z)
    rhs = _mul(x, _mul(y, z))
    scale = [np.abs(x[i]) + x[2] * np.abs(y[i]) + x[2] * y[2] * np.abs(z[i]) for i in (0, 1)]
    assoc = max(float(np.max(np.abs(lhs[i] - rhs[i]) / scale[i])) for i in (0, 1))
    assoc = max(assoc, float(np.max(np.abs(lhs[2] - rhs[2]) / np.abs(lhs[2]))))
    e = (np.zeros(n), np.zeros(n), np.ones(n))
    ident = max(float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))
                for p, q in ((_mul(x, e), x), (_mul(e, x), x)) for a, b in zip(p, q))
    xi = _mul(x, _inv(x))
    inv = max(float(np.max(np.abs(xi[0]) / (np.abs(x[0]) + 1e-300))), float(np.max(np.abs(xi[1]) / (np.abs(x[1]) + 1e-300))),
              float(np.max(np.abs(xi[2] - 1.0))))
    # left invariance: moderate sizes so that distances stay in a range where absolute
    # error 1e-10 is meaningful
    x, y, z = (sample_elements(rng, n, (1e-1, 1e1), 10.0) for _ in range(3))
    d0 = distance_arrays(*x, *y)
    zx, zy = _mul(z, x), _mul(z, y)
    d1 = distance_arrays(*zx, *zy)
    inv_sym = float(np.max(np.abs(radius_u(*x[:2], np.log(x[2])) - radius_u(*_inv(x)[:2], np.log(_inv(x)[2])))))
    return {"associativity": assoc, "identity": ident, "inverse": inv,
            "left_invariance": float(np.max(np.abs(d1 - d0))), "inverse_symmetry": inv_sym}


def kernel_symmetry_suite(rng, n=10_000):
    """max relative |p_t(x) - delta(x) p_t(x^{-1})| for both kernels."""
    out = {}
    for name, spec in (("heat", HEAT), ("poisson", POISSON)):
        x1, x2, a = sample_elements(rng, n, (1e-2, 1e2), 5.0)
        t = np.exp(rng.uniform(math.log(0.1), math.log(10.0), n))
        p = kernel_arrays(spec, t, x1, x2, a)
        i1, i2, ia = _inv((x1, x2, a))
        q = kernel_arrays(spec, t, i1, i2, ia) * a**-2.0
        both = (p > 0) | (q > 0)
        out[name] = float(np.max(np.abs(p - q)[both] / np.maximum(p, q)[both]))
        out[name + "_compared"] = int(both.sum())
    return out


def flow(x1, x2, a, i, s):
    """x exp(s X_i): X_0 scales a, X_1 and X_2 move x_i by s a."""
    if i == 0:
        return x1, x2, a * np.exp(s)
    if i == 1:
        return x1 + s * a, x2, a
    return x1, x2 + s * a, a


def gradient_fd_suite(rng, n=1000, max_exponent=50.0):
    """Worst norm-relative error of the closed-form X_i p_t against central differences.

    Samples have t log-uniform in [1e-2, 1e2] and r log-uniform in [1e-2, 20], kept
    only where r^2/(4t) <= max_exponent.
    """
    rows = []
    while len(rows) < n:
        t = math.exp(rng.uniform(math.log(1e-2), math.log(1e2)))
        r = math.exp(rng.uniform(math.log(1e-2), math.log(20.0)))
        if r * r / (4 * t) > max_exponent:
            continue
        u = rng.uniform(-r, r)
        phi = rng.uniform(0, 2 * math.pi)
        a = math.exp(u)
        rho = math.sqrt(max(2 * a * math.cosh(r) - a * a - 1.0, 0.0))
        rows.append((t, rho * math.cos(phi), rho * math.sin(phi), a, r))
    t, x1, x2, a, r = (np.array(c) for c in zip(*rows))
    g = kernel_grad_arrays(t, x1, x2, a)
    h = 1e-4 * np.minimum(np.minimum(np.sqrt(t), r), 1.0)
    fd = np.stack([(kernel_arrays(HEAT, t, *flow(x1, x2, a, i, h)) - kernel_arrays(HEAT, t, *flow(x1, x2, a, i, -h)))
                   / (2 * h) for i in range(3)])
    err = np.linalg.norm(g - fd, axis=0) / np.linalg.norm(g, axis=0)
    return {"gradient_fd": float(err.max()), "samples": int(len(rows))}


def _brute_sup(kind, r):
    """Numerical maximiser of t -> profile(t, r): coarse log grid, then a root of the
    central-difference derivative of the log-profile (step 1e-6 in ln t) by Brent's method."""
    from scipy.optimize import brentq

    lts = np.linspace(math.log(r) - 20, math.log(r) + 20, 4001)
    with np.errstate(divide="ignore"):
        vals = np.log(profile(kind, np.exp(lts), r))
    k = int(np.argmax(vals))
    h = 1e-6

    def dlog(lt):
        return float(np.log(profile(kind, math.exp(lt + h), r)) - np.log(profile(kind, math.exp(lt - h), r))) / (2 * h)

    lt = brentq(dlog, lts[k - 1], lts[k + 1], xtol=1e-14, rtol=1e-15)
    return float(profile(kind, math.exp(lt), r)), math.exp(lt)


def sup_closed_form_suite(radii=(0.1, 1.0, 10.0)):
    """Relative gaps between closed-form and brute-force sup_t of the profiles."""
    out = {}
    for name, spec in (("heat", HEAT), ("poisson", POISSON)):
        worst_v = worst_t = 0.0
        for r in radii:
            v_closed, t_closed = kernel_sup_t_ru(spec, r, 0.0)
            v_closed = float(v_closed) / (spec.c0 * float(r_over_sinh(r)))
            v_brute, t_brute = _brute_sup(spec.kind, r)
            worst_v = max(worst_v, abs(v_closed - v_brute) / v_brute)
            worst_t = max(worst_t, abs(float(t_closed) - t_brute) / t_brute)
        out[name + "_value"] = worst_v
        out[name + "_argmax"] = worst_t
    return out


def ball_volume_suite(radii=(0.5, 1.0, 2.0, 4.0)):
    """(relative gap, certified relative error) per radius and measure."""
    out = {}
    spec = QuadratureSpec(rel_tol=1e-10)
    for r in radii:
        exact = ball_volume_exact(r)
        for kind in MeasureKind:
            c = ball_volume(r, kind, spec)
            out[f"{kind.value}_{r}"] = (abs(c.value - exact) / exact, max(c.error / exact, 1e-13))
    return out
