"""Integration on G in (x1, x2, u = ln a) coordinates and group convolution."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _boxmass
from .group import GroupElement, MeasureKind, radius_u
from .kernels import HEAT, KernelKind, KernelSpec, kernel_ru
from .numerics import (
    Certificate,
    QuadratureSpec,
    TailKind,
    ToleranceNotMet,
    adaptive_gl,
    gauss_legendre,
)


@dataclass(frozen=True)
class BoxRegion:
    x1lo: float
    x1hi: float
    x2lo: float
    x2hi: float
    alo: float
    ahi: float

    def __post_init__(self):
        if not (self.x1lo < self.x1hi and self.x2lo < self.x2hi and 0 < self.alo < self.ahi):
            raise ValueError(f"empty or invalid box {self}")

    @classmethod
    def from_u(cls, x1lo, x1hi, x2lo, x2hi, ulo, uhi):
        return cls(x1lo, x1hi, x2lo, x2hi, math.exp(ulo), math.exp(uhi))

    @property
    def ulo(self):
        return math.log(self.alo)

    @property
    def uhi(self):
        return math.log(self.ahi)

    @property
    def measure(self):
        """Right Haar measure."""
        return (self.x1hi - self.x1lo) * (self.x2hi - self.x2lo) * math.log(self.ahi / self.alo)

    def left_measure(self):
        return (self.x1hi - self.x1lo) * (self.x2hi - self.x2lo) * 0.5 * (self.alo**-2 - self.ahi**-2)

    def as_u_array(self):
        return np.array([self.x1lo, self.x1hi, self.x2lo, self.x2hi, self.ulo, self.uhi])

    def translate(self, z):
        """The box z * B."""
        return BoxRegion(z.x1 + z.a * self.x1lo, z.x1 + z.a * self.x1hi,
                         z.x2 + z.a * self.x2lo, z.x2 + z.a * self.x2hi,
                         z.a * self.alo, z.a * self.ahi)

    def contains(self, other, rtol=1e-12):
        def inside(lo, hi, olo, ohi):
            tol = rtol * max(abs(lo), abs(hi), hi - lo)
            return olo >= lo - tol and ohi <= hi + tol

        return (inside(self.x1lo, self.x1hi, other.x1lo, other.x1hi)
                and inside(self.x2lo, self.x2hi, other.x2lo, other.x2hi)
                and inside(self.ulo, self.uhi, other.ulo, other.uhi))

    def distance_to(self, x):
        """Exact distance d(x, B)."""
        return float(_boxmass.box_distance((self.x1lo - x.x1) / x.a, (self.x1hi - x.x1) / x.a,
                                           (self.x2lo - x.x2) / x.a, (self.x2hi - x.x2) / x.a,
                                           self.ulo - x.u, self.uhi - x.u))

    def corners(self):
        return [GroupElement(p, q, s) for p in (self.x1lo, self.x1hi)
                for q in (self.x2lo, self.x2hi) for s in (self.alo, self.ahi)]


def bounding_box(boxes):
    return BoxRegion(min(b.x1lo for b in boxes), max(b.x1hi for b in boxes),
                     min(b.x2lo for b in boxes), max(b.x2hi for b in boxes),
                     min(b.alo for b in boxes), max(b.ahi for b in boxes))


class StepFunction:
    """Finite combination sum c_k chi_{B_k} of boxes disjoint up to boundaries."""

    def __init__(self, terms):
        self.terms = tuple((b, float(c)) for b, c in terms)

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    @property
    def boxes(self):
        return [b for b, _ in self.terms]

    @property
    def coefs(self):
        return np.array([c for _, c in self.terms])

    def arrays(self):
        return (np.array([b.as_u_array() for b, _ in self.terms]).reshape(-1, 6),
                self.coefs.astype(float))

    @property
    def sup_norm(self):
        return max((abs(c) for _, c in self.terms), default=0.0)

    def integral(self):
        return math.fsum(c * b.measure for b, c in self.terms)

    def l1_norm(self):
        return math.fsum(abs(c) * b.measure for b, c in self.terms)

    def scaled(self, s):
        return StepFunction((b, s * c) for b, c in self.terms)

    def __add__(self, other):
        return StepFunction(self.terms + other.terms)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def left_translate(self, z):
        """x -> f(z^{-1} x): each box B becomes z * B."""
        return StepFunction((b.translate(z), c) for b, c in self.terms)

    def support_box(self):
        return bounding_box([b for b, c in self.terms if c != 0.0])

    def evaluate(self, x1, x2, a):
        x1, x2, a = (np.asarray(v, dtype=float) for v in (x1, x2, a))
        out = np.zeros(np.broadcast(x1, x2, a).shape)
        for b, c in self.terms:
            m = (x1 >= b.x1lo) & (x1 < b.x1hi) & (x2 >= b.x2lo) & (x2 < b.x2hi) & (a >= b.alo) & (a < b.ahi)
            out = out + c * m
        return out

    def normalized(self):
        """Common refinement on the grid of all faces; boxes with equal value kept apart.

        Returns {(i, j, k): coefficient} over grid cells plus the three edge lists, so
        two step functions can be compared exactly cell by cell.
        """
        e1 = sorted({v for b, _ in self.terms for v in (b.x1lo, b.x1hi)})
        e2 = sorted({v for b, _ in self.terms for v in (b.x2lo, b.x2hi)})
        e3 = sorted({v for b, _ in self.terms for v in (b.alo, b.ahi)})
        cells = {}
        for b, c in self.terms:
            i0, i1 = e1.index(b.x1lo), e1.index(b.x1hi)
            j0, j1 = e2.index(b.x2lo), e2.index(b.x2hi)
            k0, k1 = e3.index(b.alo), e3.index(b.ahi)
            for key in itertools.product(range(i0, i1), range(j0, j1), range(k0, k1)):
                cells[key] = cells.get(key, 0.0) + c
        return cells, (e1, e2, e3)


def _gl_tensor(order):
    x, w = gauss_legendre(order)
    X = np.array(list(itertools.product(x, x, x)))
    W = np.array([p * q * r for p, q, r in itertools.product(w, w, w)])
    return X, W


def integrate(f, box, kind=MeasureKind.RIGHT, spec=QuadratureSpec(), splits=None, raise_on_fail=False):
    """Tensor Gauss-Legendre on (x1, x2, u) with adaptive dyadic subdivision.

    f takes arrays (x1, x2, a).  A cell is compared with the sum over its two
    halves along each axis; the axis with the largest difference is the one
    split.  `splits` optionally lists extra initial cut points per axis
    (x1, x2 and u coordinates).
    """
    X, W = _gl_tensor(spec.order)
    lo0 = np.array([box.x1lo, box.x2lo, box.ulo])
    hi0 = np.array([box.x1hi, box.x2hi, box.uhi])

    edges = []
    for ax in range(3):
        pts = [lo0[ax], hi0[ax]]
        if splits is not None:
            pts += [p for p in splits[ax] if lo0[ax] < p < hi0[ax]]
        edges.append(sorted(set(pts)))

    def rule(lo, hi):
        # lo, hi: (k, 3) -> (k,) estimates
        width = hi - lo
        pts = lo[:, None, :] + width[:, None, :] * X[None, :, :]
        p = pts.reshape(-1, 3)
        vals = np.asarray(f(p[:, 0], p[:, 1], np.exp(p[:, 2])), dtype=float) * kind.density_u(p[:, 2])
        vals = vals.reshape(pts.shape[:2])
        return (vals * W).sum(axis=1) * np.prod(width, axis=1)

    def analyse(lo, hi, base):
        """Per-axis two-level differences and the halves along every axis."""
        los, his = [], []
        for ax in range(3):
            mid = 0.5 * (lo[:, ax] + hi[:, ax])
            l1, h1 = lo.copy(), hi.copy()
            h1[:, ax] = mid
            l2, h2 = lo.copy(), hi.copy()
            l2[:, ax] = mid
            los += [l1, l2]
            his += [h1, h2]
        q = rule(np.concatenate(los), np.concatenate(his)).reshape(6, -1)
        halves = q.reshape(3, 2, -1)
        diffs = np.abs(halves.sum(axis=1) - base[None, :])
        return diffs, halves

    cells_lo = np.array(list(itertools.product(*(e[:-1] for e in edges))))
    cells_hi = np.array(list(itertools.product(*(e[1:] for e in edges))))
    base = rule(cells_lo, cells_hi)
    diffs, halves = analyse(cells_lo, cells_hi, base)
    heap = []
    counter = itertools.count()
    for i in range(len(base)):
        ax = int(np.argmax(diffs[:, i]))
        heap.append((-float(diffs[ax, i]), next(counter), cells_lo[i], cells_hi[i], ax,
                     float(halves[ax, 0, i]), float(halves[ax, 1, i]), 0))
    heapq.heapify(heap)
    frozen_val, frozen_err = [], []
    converged = True

    def totals():
        v = math.fsum(h[5] + h[6] for h in heap) + math.fsum(frozen_val)
        e = math.fsum(-h[0] for h in heap) + math.fsum(frozen_err)
        return v, e

    val, err = totals()
    while heap and err > max(spec.abs_tol, spec.rel_tol * abs(val)):
        batch = []
        while heap and len(batch) < 16:
            h = heapq.heappop(heap)
            if h[7] >= 3 * spec.max_subdivisions:
                frozen_val.append(h[5] + h[6])
                frozen_err.append(-h[0])
                converged = False
            else:
                batch.append(h)
        if not batch:
            break
        new_lo, new_hi, new_base, depth = [], [], [], []
        for h in batch:
            lo, hi, ax = h[2], h[3], h[4]
            mid = 0.5 * (lo[ax] + hi[ax])
            l2 = lo.copy()
            l2[ax] = mid
            h1 = hi.copy()
            h1[ax] = mid
            new_lo += [lo, l2]
            new_hi += [h1, hi]
            new_base += [h[5], h[6]]
            depth += [h[7] + 1, h[7] + 1]
        new_lo = np.array(new_lo)
        new_hi = np.array(new_hi)
        new_base = np.array(new_base)
        diffs, halves = analyse(new_lo, new_hi, new_base)
        for i in range(len(new_base)):
            ax = int(np.argmax(diffs[:, i]))
            heapq.heappush(heap, (-float(diffs[ax, i]), next(counter), new_lo[i], new_hi[i], ax,
                                  float(halves[ax, 0, i]), float(halves[ax, 1, i]), depth[i]))
        val, err = totals()
    val, err = totals()
    ok = err <= max(spec.abs_tol, spec.rel_tol * abs(val))
    converged = converged and ok
    if not converged and raise_on_fail:
        raise ToleranceNotMet("integrate: subdivision budget exhausted", val, err)
    return Certificate(val, err, 0.0, TailKind.NONE, converged=converged)


def radial_integral(phi, r_max, spec=QuadratureSpec(), breakpoints=()):
    """int_0^{r_max} phi(r) r sinh r dr by adaptive Gauss-Legendre."""
    val, err, _ = adaptive_gl(lambda r: np.asarray(phi(r), dtype=float) * r * np.sinh(r), 0.0, r_max, spec,
                              breakpoints=breakpoints)
    return val


def _geometric_splits(X, h, ratio=4.0):
    """0 and +-X ratio^-k down to the scale h, so that a function concentrated near 0
    on a wide interval is resolved from the first level on."""
    pts = [0.0]
    v = X / ratio
    while v > h:
        pts += [v, -v]
        v /= ratio
    return sorted(pts)


def ball_slabs(r_cut, width=1.0):
    """Cover B(e, r_cut) by u-slabs; each slab carries a square |x_i| <= X containing
    every section of the ball inside the slab, plus geometric cut points."""
    n = max(1, int(math.ceil(2 * r_cut / width)))
    edges = np.linspace(-r_cut, r_cut, n + 1)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        umin = 0.0 if lo < 0 < hi else min(abs(lo), abs(hi))
        X = math.sqrt(max(2.0 * math.exp(hi) * (math.cosh(r_cut) - math.cosh(umin)), 0.0)) + 1e-12
        sp = _geometric_splits(X, 0.05 * math.exp(0.5 * lo))
        out.append((float(lo), float(hi), X, sp))
    return out


def ball_integral(g, r_cut, spec=QuadratureSpec(rel_tol=1e-8), extra_splits=((), (), ())):
    """int over B(e, r_cut) of g(x1, x2, a) d rho, by slabs (integrand cut to the ball)."""
    def cut(x1, x2, a):
        r = radius_u(x1, x2, np.log(a))
        return np.where(r <= r_cut, g(x1, x2, a), 0.0)

    total, err, ok = 0.0, 0.0, True
    for lo, hi, X, sp in ball_slabs(r_cut):
        cert = integrate(cut, BoxRegion.from_u(-X, X, -X, X, lo, hi), MeasureKind.RIGHT, spec,
                         splits=(sp + list(extra_splits[0]), sp + list(extra_splits[1]), list(extra_splits[2])))
        total += cert.value
        err += cert.error
        ok = ok and cert.converged
    return total, err, ok


def radial_direct(fr, r_cut, spec=QuadratureSpec(rel_tol=1e-8)):
    """Direct 3D integral of delta^{1/2} f(r) over B(e, r_cut)."""
    def g(x1, x2, a):
        return fr(radius_u(x1, x2, np.log(a))) / a

    val, err, _ = ball_integral(g, r_cut, spec)
    return val, err


def default_radial_battery():
    """(name, f(r), support/truncation radius, exact-tail function) for the calibration."""
    battery = []
    for w in (0.5, 1.0, 1.5):
        battery.append((f"gaussian_w{w}", lambda r, w=w: np.exp(-(np.asarray(r) / w) ** 2), 6.0 * w + 2.0))
    for R in (1.0, 2.0):
        battery.append((f"bump_R{R}", lambda r, R=R: np.clip(1.0 - (np.asarray(r) / R) ** 2, 0.0, None) ** 3, R))
    return battery


def gaussian_radial_tail(w, R):
    """Upper bound for int_{r > R} delta^{1/2} e^{-r^2/w^2} d rho, from
    delta^{1/2} <= e^r and the shell measure 4 pi sinh^2 r dr <= pi e^{2r} dr."""
    # pi int_R^inf e^{3r - r^2/w^2} dr, complete the square
    m = 1.5 * w * w
    return math.pi * math.exp(m * m / (w * w)) * 0.5 * w * math.sqrt(math.pi) * special.erfc((R - m) / w)


def calibrate_radial_constant(spec=QuadratureSpec(rel_tol=1e-8), battery=None, return_details=False):
    """kappa = (direct 3D integral of delta^{1/2} f) / (int f(r) r sinh r dr), averaged
    over a battery of radial test functions; raises if the ratios spread by more than 1%."""
    battery = default_radial_battery() if battery is None else battery
    rows = []
    for name, fr, r_cut in battery:
        direct, err = radial_direct(fr, r_cut, spec)
        tail = 0.0
        if name.startswith("gaussian"):
            w = float(name.split("_w")[1])
            tail = gaussian_radial_tail(w, r_cut)
        radial = radial_integral(fr, r_cut, QuadratureSpec(rel_tol=1e-12))
        rows.append({"name": name, "direct": direct, "error": err, "tail": tail, "radial": radial,
                     "ratio": direct / radial})
    ratios = np.array([r["ratio"] for r in rows])
    spread = (ratios.max() - ratios.min()) / ratios.mean()
    if spread > 0.01:
        raise ValueError(f"inconsistent radial ratios, spread {spread:.3g}")
    kappa = float(ratios.mean())
    if return_details:
        return kappa, rows
    return kappa


def poisson_mass_from_kappa(kappa, t=1.0):
    """kappa/pi^2 * t * int_0^inf r^2/(t^2+r^2)^2 dr, the Poisson mass implied by kappa.

    With r = t tan(theta) the integral is t^{-1} int_0^{pi/2} sin^2 theta d theta on a
    finite interval, evaluated by quadrature.
    """
    val, err, _ = adaptive_gl(lambda th: np.sin(th) ** 2, 0.0, 0.5 * math.pi, QuadratureSpec(rel_tol=1e-13))
    return kappa / math.pi**2 * val, kappa / math.pi**2 * err


def outside_ball_mass(spec, t, R):
    """Exact mass of p_t outside B(e, R), using the radial integration formula."""
    if spec.kind == KernelKind.HEAT:
        # int_R^inf r^2 e^{-r^2/4t} dr
        m = 2.0 * t * R * math.exp(-R * R / (4 * t)) + 2.0 * math.sqrt(math.pi) * t**1.5 * special.erfc(R / (2 * math.sqrt(t)))
        return 4 * math.pi * spec.c0 * t**-1.5 * m
    # int_R^inf t r^2/(t^2+r^2)^2 dr
    m = 0.5 * (0.5 * math.pi - math.atan(R / t)) + 0.5 * t * R / (t * t + R * R)
    return 4 * math.pi * spec.c0 * m


def kernel_cut_radius(spec, t):
    if spec.kind == KernelKind.HEAT:
        return math.sqrt(120.0 * t) + 2.0
    return 1e3 * t


def kernel_mass(spec, t, q=QuadratureSpec(order=6, rel_tol=1e-6), r_cut=None):
    """int p_t d rho: direct 3D quadrature over a ball, plus the exact mass outside it."""
    r_cut = kernel_cut_radius(spec, t) if r_cut is None else r_cut

    def g(x1, x2, a):
        return kernel_ru(spec, t, radius_u(x1, x2, np.log(a)), np.log(a))

    val, err, ok = ball_integral(g, r_cut, q)
    return Certificate(val, err, outside_ball_mass(spec, t, r_cut), TailKind.EXACT, converged=ok)


def kernel_sup(spec, t):
    """sup_G p_t, from e^{-u} <= e^r on B(e, r) maximised over a fine radial grid
    (the maximiser is at r = O(sqrt t), well inside the grid)."""
    rr = np.linspace(0.0, 60.0 + 20 * math.sqrt(t), 200001)[1:]
    vals = spec.c0 * 2.0 * rr / (1.0 - np.exp(-2.0 * rr)) * _profile_vec(spec.kind, t, rr)
    return float(vals.max()) * (1 + 1e-6)


def convolve_many(f, spec, ts, x, q=QuadratureSpec()):
    """(f * p_t)(x) for an array of t, with error estimates."""
    boxes, coefs = f.arrays()
    gx, gw = gauss_legendre(q.order)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts <= 0):
        raise ValueError("t must be positive")
    vals, errs = _boxmass.convolve_point(int(spec.kind), spec.c0, boxes, coefs, x.x1, x.x2, x.u, ts, gx, gw,
                                         q.rel_tol, q.abs_tol, q.max_subdivisions)
    return vals, errs


def convolve(f, spec, t, x, q=QuadratureSpec()):
    """(f * p_t)(x) = delta(x) int f(y) p_t(x^{-1} y) d rho(y), exact in f."""
    vals, _ = convolve_many(f, spec, [t], x, q)
    return float(vals[0])


def self_convolution(spec, s, t, x, q=QuadratureSpec(order=6, rel_tol=1e-6), r_cut=None):
    """(p_s * p_t)(x) = int p_s(x y^{-1}) p_t(y) d rho(y), by direct 3D quadrature over
    B(e, r_cut); the rest is at most sup p_s times the exact mass of p_t outside."""
    r_cut = kernel_cut_radius(spec, t) if r_cut is None else r_cut

    def g(y1, y2, b):
        # p_s(x y^{-1}) p_t(y), x y^{-1} = (x1 - a y1/b, x2 - a y2/b, a/b)
        v = np.log(b)
        w = x.u - v
        return (kernel_ru(spec, t, radius_u(y1, y2, v), v)
                * kernel_ru(spec, s, radius_u(x.x1 - x.a * y1 / b, x.x2 - x.a * y2 / b, w), w))

    val, err, ok = ball_integral(g, r_cut, q, extra_splits=([x.x1 / x.a], [x.x2 / x.a], [x.u]))
    tail = kernel_sup(spec, s) * outside_ball_mass(spec, t, r_cut)
    return Certificate(val, err, tail, TailKind.EXACT, converged=ok)


def _profile_vec(kind, t, r):
    if kind == KernelKind.HEAT:
        return np.exp(-r * r / (4.0 * t) - 1.5 * math.log(t))
    return t / (t * t + r * r) ** 2
