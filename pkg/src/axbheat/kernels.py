"""Heat and Poisson kernels on G, their X_i-derivatives and suprema over t.

p_t(x) = c0 * delta(x)^{1/2} * (r / sinh r) * profile(t, r),  r = d(x, e),
with profile t^{-3/2} exp(-r^2/4t) (heat) or t / (t^2 + r^2)^2 (Poisson).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .group import GroupElement, radius_u

HEAT_C0 = 1.0 / (8.0 * math.pi**1.5)
POISSON_C0 = 1.0 / math.pi**2
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class KernelKind(enum.IntEnum):
    HEAT = 0
    POISSON = 1


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.HEAT
    c0: float | None = None

    def __post_init__(self):
        if self.c0 is None:
            object.__setattr__(self, "c0", HEAT_C0 if self.kind == KernelKind.HEAT else POISSON_C0)
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")

    @property
    def mass_factor(self):
        """Total mass of the kernel as a multiple of c0 (8 pi^{3/2} or pi^2)."""
        return 8.0 * math.pi**1.5 if self.kind == KernelKind.HEAT else math.pi**2


HEAT = KernelSpec(KernelKind.HEAT)
POISSON = KernelSpec(KernelKind.POISSON)


class TooCloseToIdentity(ValueError):
    pass


class UncalibratedFit(RuntimeError):
    pass


def r_over_sinh(r):
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = r < 1e-4
    big = r > 20.0
    mid = ~(small | big)
    out[small] = 1.0 - r[small] ** 2 / 6.0
    out[mid] = r[mid] / np.sinh(r[mid])
    rb = r[big]
    out[big] = 2.0 * rb * np.exp(-rb) / (1.0 - np.exp(-2.0 * rb))
    return out


def profile(kind, t, r):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if kind == KernelKind.HEAT:
        return np.exp(-r * r / (4.0 * t) - 1.5 * np.log(t))
    return t / (t * t + r * r) ** 2


def kernel_ru(spec, t, r, u):
    """p_t at a point with distance r from e and log-dilation u (vectorised)."""
    return spec.c0 * np.exp(-np.asarray(u, dtype=float)) * r_over_sinh(r) * profile(spec.kind, t, r)


def kernel_arrays(spec, t, x1, x2, a):
    u = np.log(np.asarray(a, dtype=float))
    return kernel_ru(spec, t, radius_u(x1, x2, u), u)


def kernel_value(spec, t, x):
    if not t > 0:
        raise ValueError("t must be positive")
    return float(kernel_arrays(spec, t, x.x1, x.x2, x.a))


def _grad_coefficients(x1, x2, a):
    """Coefficients (A_i, C_i) with X_i p_t = p_t (A_i + C_i / t), order (X0, X1, X2)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    a = np.asarray(a, dtype=float)
    r = radius_u(x1, x2, np.log(a))
    sh = np.sinh(r)
    ch = np.cosh(r)
    base = 1.0 / r - ch / sh
    A = np.empty((3,) + r.shape)
    C = np.empty((3,) + r.shape)
    w = (a - ch) / sh
    A[0] = w / r - ch * w / sh - 1.0
    C[0] = -0.5 * r * w
    for i, xi in ((1, x1), (2, x2)):
        A[i] = xi / sh * base
        C[i] = -0.5 * r * xi / sh
    return r, A, C


def kernel_grad_arrays(t, x1, x2, a, spec=HEAT):
    if spec.kind != KernelKind.HEAT:
        raise ValueError("derivatives are only available for the heat kernel")
    r, A, C = _grad_coefficients(x1, x2, a)
    p = spec.c0 / np.asarray(a, dtype=float) * r_over_sinh(r) * profile(spec.kind, t, r)
    return p * (A + C / t)


def kernel_grad(spec, t, x):
    """(X0 p_t, X1 p_t, X2 p_t) at x."""
    if not t > 0:
        raise ValueError("t must be positive")
    r = float(radius_u(x.x1, x.x2, x.u))
    if r <= 1e-6:
        raise TooCloseToIdentity(f"r(x) = {r:.3g} is too close to the identity")
    return kernel_grad_arrays(t, x.x1, x.x2, x.a, spec)


def sup_profile(kind, r):
    """(value, argmax) of t -> profile(t, r)."""
    r = np.asarray(r, dtype=float)
    if kind == KernelKind.HEAT:
        return (6.0 / math.e) ** 1.5 / r**3, r * r / 6.0
    return 3.0 * math.sqrt(3.0) / (16.0 * r**3), r / math.sqrt(3.0)


def kernel_sup_t_ru(spec, r, u):
    val, targ = sup_profile(spec.kind, r)
    return spec.c0 * np.exp(-np.asarray(u, dtype=float)) * r_over_sinh(r) * val, targ


def kernel_sup_t(spec, x):
    r = float(radius_u(x.x1, x.x2, x.u))
    if not r > 0:
        raise ValueError("kernel_sup_t needs r(x) > 0")
    val, targ = kernel_sup_t_ru(spec, r, x.u)
    return float(val), float(targ)


def _sup_component(s, A, C):
    """sup over tau > 0 of tau^{3/2} e^{-s tau} |A + C tau| (closed form)."""
    best = np.zeros(np.broadcast(s, A, C).shape)
    s, A, C = np.broadcast_arrays(s, A, C)
    # the value is homogeneous in (A, C); normalise so the quadratic cannot underflow
    scale = np.maximum(np.abs(A), np.abs(C))
    with np.errstate(invalid="ignore"):
        A = np.where(scale > 0, A / scale, 0.0)
        C = np.where(scale > 0, C / scale, 0.0)
    # stationary points solve -s C tau^2 + (5C/2 - s A) tau + 3A/2 = 0
    qa = -s * C
    qb = 2.5 * C - s * A
    qc = 1.5 * A
    lin = np.abs(qa) < 1e-300
    disc = np.sqrt(np.maximum(qb * qb - 4.0 * qa * qc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = [
            np.where(lin, -qc / qb, (-qb + disc) / (2.0 * qa)),
            np.where(lin, -qc / qb, (-qb - disc) / (2.0 * qa)),
        ]
    for tau in roots:
        ok = np.isfinite(tau) & (tau > 0)
        tt = np.where(ok, tau, 1.0)
        val = np.exp(1.5 * np.log(tt) - s * tt) * np.abs(A + C * tt)
        best = np.where(ok, np.maximum(best, val), best)
    return best * scale


def grad_sup_t_components(x1, x2, a, spec=HEAT):
    """sup_t |X_i p_t| for i = 0, 1, 2, in closed form."""
    r, A, C = _grad_coefficients(x1, x2, a)
    pref = spec.c0 / np.asarray(a, dtype=float) * r_over_sinh(r)
    s = 0.25 * r * r
    return np.stack([pref * _sup_component(s, A[i], C[i]) for i in range(3)])


def grad_norm_sup_t(x1, x2, a, spec=HEAT, n_grid=96, n_refine=30):
    """sup_t ||grad p_t|| by a log grid around t = r^2/6 and golden refinement."""
    x1, x2, a = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, a)))
    r, A, C = _grad_coefficients(x1, x2, a)
    pref = spec.c0 / a * r_over_sinh(r)

    def norm(lt):
        t = np.exp(lt)
        g = A + C / t
        return pref * profile(spec.kind, t, r) * np.sqrt((g * g).sum(axis=0))

    centre = np.log(r * r / 6.0)
    offs = np.linspace(-12.0, 12.0, n_grid)
    vals = np.stack([norm(centre + o) for o in offs])
    k = np.clip(vals.argmax(axis=0), 1, n_grid - 2)
    lo = centre + offs[k - 1]
    hi = centre + offs[k + 1]
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = norm(c), norm(d)
    for _ in range(n_refine):
        left = fc > fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        c_new = hi - INV_PHI * (hi - lo)
        d_new = lo + INV_PHI * (hi - lo)
        c, d = np.where(left, c_new, d), np.where(left, c, d_new)
        fc, fd = np.where(left, norm(c), fd), np.where(left, fc, norm(d))
    return np.maximum(vals.max(axis=0), np.maximum(fc, fd))


# Envelope shapes for sup over B(x, r1/2) of sup_t ||grad p_t||.
def shape_inner(r):
    return np.asarray(r, dtype=float) ** -4


def shape_horizontal(r, a, xnorm):
    return (1.0 + xnorm / a) / (r * r * np.cosh(r) ** 2)


def shape_vertical(r, a):
    ch = np.cosh(r)
    return 1.0 / (a * r**3 * ch) + 1.0 / (r * r * ch * ch)


@dataclass(frozen=True)
class GradBoundFit:
    c3: float | None = None
    c4: float | None = None
    c5: float | None = None
    safety: float = 4.0
    r1: float = 0.05
    c_fl: float | None = None  # constant for the f_L far-field shape

    def __post_init__(self):
        if self.safety < 1:
            raise ValueError("safety factor must be >= 1")

    @property
    def calibrated(self):
        return None not in (self.c3, self.c4, self.c5)

    def with_fl(self, c_fl):
        return replace(self, c_fl=c_fl)


def grad_envelope_arrays(fit, x1, x2, a):
    if not fit.calibrated:
        raise UncalibratedFit("gradient envelope constants are missing")
    a = np.asarray(a, dtype=float)
    r = radius_u(x1, x2, np.log(a))
    if np.any(r < fit.r1 * (1 - 1e-12)):
        raise ValueError("envelope is only valid outside B(e, r1)")
    xn = np.hypot(x1, x2)
    inner = fit.c3 * shape_inner(r)
    rr = np.maximum(r, 1.0)
    outer = fit.c4 * shape_horizontal(rr, a, xn) + fit.c5 * shape_vertical(rr, a)
    return np.where(r < 1.0, inner, outer)


def grad_envelope(fit, x):
    return float(grad_envelope_arrays(fit, x.x1, x.x2, x.a))


def ball_stencil(radius):
    """Points of B(e, radius): centre, the six axis points and eight points at
    mixed heights, all at distance `radius` from e except the centre."""
    pts = [(0.0, 0.0, 0.0)]
    z = 2.0 * math.sinh(0.5 * radius)
    for s in (1.0, -1.0):
        pts += [(s * z, 0.0, 0.0), (0.0, s * z, 0.0), (0.0, 0.0, s * radius)]
    for w in (0.5 * radius, -0.5 * radius):
        rho = 2.0 * math.sqrt(max(math.exp(w) * (math.sinh(0.5 * radius) ** 2 - math.sinh(0.5 * w) ** 2), 0.0))
        for k in range(4):
            phi = 0.25 * math.pi + 0.5 * math.pi * k
            pts.append((rho * math.cos(phi), rho * math.sin(phi), w))
    return np.array(pts)


def _ball_sup(fn, x1, x2, a, radius):
    """max over the stencil of B(x, radius) of fn(points) -> (..., k) arrays."""
    st = ball_stencil(radius)
    best = None
    for y1, y2, w in st:
        v = fn(x1 + a * y1, x2 + a * y2, a * math.exp(w))
        best = v if best is None else np.maximum(best, v)
    return best


def sample_polar(rng, n, r_lo, r_hi):
    """Points with r log-uniform in [r_lo, r_hi], u uniform in [-r, r], uniform angle."""
    r = np.exp(rng.uniform(math.log(r_lo), math.log(r_hi), n))
    u = rng.uniform(-1.0, 1.0, n) * r
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    a = np.exp(u)
    rho = np.sqrt(np.maximum(2.0 * a * np.cosh(r) - a * a - 1.0, 0.0))
    return rho * np.cos(phi), rho * np.sin(phi), a


def calibrate_grad_fit(rng, n=400, r1=0.05, safety=4.0, r_max=12.0):
    """Fit the envelope constants as safety * max(true / shape) on a sample."""
    half = 0.5 * r1
    x1, x2, a = sample_polar(rng, n, r1, 1.0)
    g = _ball_sup(lambda *p: grad_norm_sup_t(*p), x1, x2, a, half)
    r = radius_u(x1, x2, np.log(a))
    c3 = float(np.max(g / shape_inner(r)))

    x1, x2, a = sample_polar(rng, n, 1.0, r_max)
    r = radius_u(x1, x2, np.log(a))
    xn = np.hypot(x1, x2)

    def comps(y1, y2, b):
        s = grad_sup_t_components(y1, y2, b)
        return np.stack([s[0], np.hypot(s[1], s[2])])

    g = _ball_sup(comps, x1, x2, a, half)
    c4 = float(np.max(g[1] / shape_horizontal(r, a, xn)))
    c5 = float(np.max(g[0] / shape_vertical(r, a)))
    return GradBoundFit(safety * c3, safety * c4, safety * c5, safety, r1)


def ball_sup_gradient(x1, x2, a, r1):
    """The calibrated quantity: sup over B(x, r1/2) of sup_t ||grad p_t||."""
    return _ball_sup(lambda *p: grad_norm_sup_t(*p), x1, x2, a, 0.5 * r1)
