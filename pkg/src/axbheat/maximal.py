"""The maximal function Mf(x) = sup_t |f * p_t(x)| and its L^1 norm."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _boxmass
from ._cubature import AdaptiveCubature
from .group import GroupElement, radius_u
from .kernels import HEAT, GradBoundFit, KernelSpec, UncalibratedFit, kernel_ru, sup_profile
from .numerics import QuadratureSpec, TailKind, gauss_legendre
from .quadrature import BoxRegion, StepFunction


class DivergenceWarning(UserWarning):
    """f has no cancellation, so its maximal function is not integrable."""


class RegionError(ValueError):
    """A far-field bound was requested inside its region of validity."""


@dataclass(frozen=True)
class SupSearchSpec:
    t_min: float = 1e-6
    t_max: float = 1e6
    grid: int = 48
    refine: int = 40
    t_factor: float = 1e-4  # the grid starts at t_factor * max(t_min, d(x, supp f)^2)

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max):
            raise ValueError("need 0 < t_min < t_max")
        if self.grid < 8:
            raise ValueError("grid must have at least 8 points")
        if self.refine < 0 or self.t_factor <= 0:
            raise ValueError("invalid refinement settings")


@dataclass
class L1Report:
    inner: float
    inner_error: float
    tail: float
    tail_kind: TailKind
    evaluations: int
    cells: int
    converged: bool
    domain: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def total(self):
        return self.inner + self.tail


def _engine_args(s, q):
    gx, gw = gauss_legendre(q.order)
    return s.t_min, s.t_factor, s.t_max, s.grid, s.refine, gx, gw, q.rel_tol, q.abs_tol, q.max_subdivisions


def maximal_many(f, x1, x2, u, spec=HEAT, s=SupSearchSpec(), q=QuadratureSpec(rel_tol=1e-8)):
    """Mf at arrays of points; returns (values, argmax t, error estimates)."""
    boxes, coefs = f.arrays()
    pts = np.ascontiguousarray(np.stack(np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float),
                                                            np.asarray(u, float)), axis=-1).reshape(-1, 3))
    out = _boxmass.maximal_batch(int(spec.kind), spec.c0, boxes, coefs, pts, *_engine_args(s, q))
    return out[:, 0], out[:, 1], out[:, 2]


def maximal_at(f, x, s=SupSearchSpec(), q=QuadratureSpec(rel_tol=1e-8), spec=HEAT):
    """(Mf(x), argmax t)."""
    v, t, _ = maximal_many(f, [x.x1], [x.x2], [x.u], spec, s, q)
    return float(v[0]), float(t[0])


def _indicator_bound_log(box, x1, x2, u, spec):
    """log of the far-field bound for M chi_B at points with d(x, B) >= 1 (arrays).

    M chi_B(x) <= rho(B) delta(x) sup_{y in B} sup_t p_t(x^{-1} y) and, for y = (., ., b),
    delta(x) delta^{1/2}(x^{-1} y) = 1/(a b); the remaining radial factor decreases in r,
    so it is evaluated at the distance d(x, B).
    """
    d = _boxmass.box_distance_batch(box.as_u_array(), np.ascontiguousarray(x1, dtype=float),
                                    np.ascontiguousarray(x2, dtype=float), np.ascontiguousarray(u, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        val, _ = sup_profile(spec.kind, d)
        log_r_sinh = np.log(d) - _log_sinh(d)
    return (math.log(box.measure * spec.c0) - u - box.ulo + log_r_sinh + np.log(val)), d


def _log_sinh(r):
    r = np.asarray(r, dtype=float)
    return r + np.log1p(-np.exp(-2.0 * r)) - math.log(2.0)


def indicator_sup_bound(x, box, spec=HEAT):
    """Upper bound for M chi_B(x), valid when d(x, B) >= 1."""
    logv, d = _indicator_bound_log(box, np.array([x.x1]), np.array([x.x2]), np.array([x.u]), spec)
    if d[0] < 1.0:
        raise RegionError(f"d(x, B) = {d[0]:.3g} < 1")
    return float(np.exp(logv[0]))


def computation_radius(L):
    return max(10.0, 1.2 * math.log(L) ** 2)


def _fl_shape_log(L, r, u, znorm):
    """log of L^3 (L + |x|) / (a^2 r^2 sinh^2 r)."""
    return 3 * math.log(L) + np.logaddexp(math.log(L), np.log(np.maximum(znorm, 1e-300))) - 2 * u \
        - 2 * np.log(r) - 2 * _log_sinh(r)


def fL_tail_bound(L, x, fit):
    """Far-field bound c_fl L^3 (L + |x|) / (a^2 r^2 sinh^2 r) for Mf_L, r = r(x) >= (ln L)^2."""
    if fit is None or fit.c_fl is None:
        raise UncalibratedFit("the f_L far-field constant has not been calibrated")
    r = float(radius_u(x.x1, x.x2, x.u))
    if r < math.log(L) ** 2:
        raise RegionError(f"r(x) = {r:.3g} is inside the computation ball (ln L)^2 = {math.log(L) ** 2:.3g}")
    return float(fit.c_fl * np.exp(_fl_shape_log(L, r, x.u, math.hypot(x.x1, x.x2))))


# ---- domain geometry -------------------------------------------------------

def _axis_segments(lo, hi, faces, merge=False):
    """Split [lo, hi] at the faces; each piece is graded towards the face(s) it touches
    (+1: towards hi, -1: towards lo, 2: both ends, 0: uniform).  Pieces between two
    faces are halved unless `merge`, which keeps them whole with mode 2."""
    inner = sorted({float(v) for v in faces if lo < v < hi})
    pts = [lo] + inner + [hi]
    is_face = [lo in faces] + [True] * len(inner) + [hi in faces]
    segs = []
    for k in range(len(pts) - 1):
        a, b = pts[k], pts[k + 1]
        if is_face[k] and is_face[k + 1] and merge:
            segs.append((a, b, 2))
        elif is_face[k] and is_face[k + 1]:
            m = 0.5 * (a + b)
            segs += [(a, m, -1), (m, b, 1)]
        elif is_face[k]:
            segs.append((a, b, -1))
        elif is_face[k + 1]:
            segs.append((a, b, 1))
        else:
            segs.append((a, b, 0))
    return segs


def _graded(eta, lo, hi, mode, h):
    """Map eta in [0, 1] to [lo, hi], geometrically refined at scale h next to the graded end.
    Returns (x, dx/deta)."""
    span = hi - lo
    both = mode == 2
    # mode 2 grades each half towards its own end
    half = np.where(both, 0.5, 1.0)
    s = np.where(both, np.where(eta < 0.5, 2 * eta, 2 * eta - 1), eta)
    m = np.where(both, np.where(eta < 0.5, -1, 1), mode)
    xi = np.log1p(half * span / h)
    e_lo = np.expm1(s * xi)
    e_hi = np.expm1((1.0 - s) * xi)
    x = np.where(m == -1, lo + h * e_lo, np.where(m == 1, hi - h * e_hi, lo + eta * span))
    jac = np.where(m == -1, h * xi * (e_lo + 1.0), np.where(m == 1, h * xi * (e_hi + 1.0), span))
    jac = np.where(both, 2 * jac, jac)
    return np.clip(x, np.minimum(lo, hi), np.maximum(lo, hi)), jac


def _power_graded(eta, lo, hi, mode, p):
    """Like _graded with the algebraic map d = span s^p for the distance to the graded end."""
    span = hi - lo
    both = mode == 2
    half = np.where(both, 0.5, 1.0)
    s = np.where(both, np.where(eta < 0.5, 2 * eta, 2 * (1 - eta)), np.where(mode == 1, 1 - eta, eta))
    d = half * span * s**p
    jac = half * span * p * s ** (p - 1) * np.where(both, 2.0, 1.0)
    to_hi = np.where(both, eta >= 0.5, mode == 1)
    x = np.where(mode == 0, lo + eta * span, np.where(to_hi, hi - d, lo + d))
    jac = np.where(mode == 0, span, jac)
    return np.clip(x, np.minimum(lo, hi), np.maximum(lo, hi)), jac


@dataclass
class Domain:
    """Product of graded segments in (x1, x2, u) with a multiplicity (for symmetric integrands)."""

    x1: list
    x2: list
    u: list
    multiplicity: float = 1.0
    g_x: float = 0.1
    h_u: float = 0.1
    power: float | None = None  # algebraic x-grading instead of the scale-g_x a exponential one

    def regions(self):
        return list(itertools.product(range(len(self.x1)), range(len(self.x2)), range(len(self.u))))

    def arrays(self):
        regs = self.regions()
        tab = np.array([self.x1[i] + self.x2[j] + self.u[k] for i, j, k in regs])
        return tab  # columns: lo1 hi1 m1 lo2 hi2 m2 lo3 hi3 m3

    def map(self, P, R, tab):
        t = tab[R]
        u, ju = _graded(P[:, 2], t[:, 6], t[:, 7], t[:, 8], self.h_u)
        if self.power is not None:
            x1, j1 = _power_graded(P[:, 0], t[:, 0], t[:, 1], t[:, 2], self.power)
            x2, j2 = _power_graded(P[:, 1], t[:, 3], t[:, 4], t[:, 5], self.power)
        else:
            h = self.g_x * np.exp(u)
            x1, j1 = _graded(P[:, 0], t[:, 0], t[:, 1], t[:, 2], h)
            x2, j2 = _graded(P[:, 1], t[:, 3], t[:, 4], t[:, 5], h)
        return x1, x2, u, ju * j1 * j2 * self.multiplicity

    def bounds(self):
        return {"x1": (self.x1[0][0], self.x1[-1][1]), "x2": (self.x2[0][0], self.x2[-1][1]),
                "u": (self.u[0][0], self.u[-1][1]), "multiplicity": self.multiplicity}


def fL_domain(L, radius=None):
    """Quarter of the box around B(e, R_B) u (L,0,1) B(e, R_B): x1 <= L/2, x2 >= 0.

    Mf_L is invariant under x2 -> -x2 and under x1 -> L - x1 (which maps f_L to -f_L),
    so the full integral is four times the quarter.
    """
    R = computation_radius(L) if radius is None else radius
    X = math.sinh(R)
    x1 = _axis_segments(-X, 0.5 * L, [-1.0, 1.0, L - 1.0, L + 1.0])
    x2 = _axis_segments(0.0, X, [1.0])
    u = _axis_segments(-R, R, [-1.0, 1.0])
    return Domain(x1, x2, u, multiplicity=4.0)


def _mirror_centre(f, axis):
    """Centre m when f o sigma = +-f for the reflection x_axis -> 2m - x_axis, else None."""
    sb = f.support_box()
    lo, hi = (sb.x1lo, sb.x1hi) if axis == 0 else (sb.x2lo, sb.x2hi)
    m = 0.5 * (lo + hi)
    scale = 1e-12 * max(abs(lo), abs(hi), 1.0)

    def key(b, mirror):
        e = [b.x1lo, b.x1hi, b.x2lo, b.x2hi]
        if mirror:
            e[2 * axis], e[2 * axis + 1] = 2 * m - e[2 * axis + 1], 2 * m - e[2 * axis]
        return tuple(round(v / scale) for v in e) + (round(b.ulo, 12), round(b.uhi, 12))

    terms = simplified_terms(f)
    plain = {key(b, False): c for b, c in terms}
    mirrored = {key(b, True): c for b, c in terms}
    if plain.keys() != mirrored.keys():
        return None
    for sign in (1.0, -1.0):
        if all(abs(plain[k] - sign * mirrored[k]) <= 1e-12 * abs(plain[k]) for k in plain):
            return m
    return None


def simplified_terms(f):
    """Disjoint (box, coefficient) pairs on the common refinement of f's faces."""
    cells, (e1, e2, e3) = f.normalized()
    return [(BoxRegion(e1[i], e1[i + 1], e2[j], e2[j + 1], e3[k], e3[k + 1]), c)
            for (i, j, k), c in sorted(cells.items()) if c != 0.0]


def support_hull(f, extra):
    """Box containing the `extra`-neighbourhood of the support of f."""
    sb = f.support_box()
    Xe = sb.ahi * math.sinh(extra)
    return BoxRegion.from_u(sb.x1lo - Xe, sb.x1hi + Xe, sb.x2lo - Xe, sb.x2hi + Xe, sb.ulo - extra, sb.uhi + extra)


def support_domain(f, extra, power=None, symmetric=True):
    """Box containing the `extra`-neighbourhood of the support of f, segmented at all faces.

    With `symmetric`, an x-axis about which f is mirror (anti)symmetric is cut at the
    mirror and only the upper half kept: reflections preserve rho and the kernels, and
    M(-f) = Mf, so Mf has the same symmetry.
    """
    h = support_hull(f, extra)
    faces = ([v for b in f.boxes for v in (b.x1lo, b.x1hi)], [v for b in f.boxes for v in (b.x2lo, b.x2hi)],
             [v for b in f.boxes for v in (b.ulo, b.uhi)])
    axes, mult = [], 1.0
    for i, (lo, hi) in enumerate(((h.x1lo, h.x1hi), (h.x2lo, h.x2hi))):
        m = _mirror_centre(f, i) if symmetric else None
        if m is not None:
            lo, mult = m, 2.0 * mult
        axes.append(_axis_segments(lo, hi, faces[i], merge=True))
    u = _axis_segments(h.ulo, h.uhi, faces[2], merge=True)
    return Domain(axes[0], axes[1], u, multiplicity=mult, power=power)


def _is_fL(f, L):
    want = {(L - 1.0, L + 1.0, -1.0, 1.0, -1.0, 1.0, 1.0), (-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0)}
    have = {(b.x1lo, b.x1hi, b.x2lo, b.x2hi, round(b.ulo, 12), round(b.uhi, 12), c) for b, c in f}
    return have == want


# ---- tails -------------------------------------------------------------------

def _polar_points(r, u, phi):
    """Points at distance r from e with height u and azimuth phi; also log|x|."""
    # |x|^2 = 2 e^u (cosh r - cosh u) = 4 e^u sinh((r+u)/2) sinh((r-u)/2)
    lz = 0.5 * (math.log(4.0) + u + _log_sinh(np.maximum(0.5 * (r + u), 1e-300))
                + _log_sinh(np.maximum(0.5 * (r - u), 1e-300)))
    z = np.exp(lz)
    return z * np.cos(phi), z * np.sin(phi), lz


def _shell_integrand_fL(L, fit, spec, r, u, phi):
    x1, x2, lz = _polar_points(r, u, phi)
    log_fl = math.log(fit.c_fl) + _fl_shape_log(L, r, u, np.exp(lz))
    b0, _ = _indicator_bound_log(BoxRegion.from_u(-1, 1, -1, 1, -1, 1), x1, x2, u, spec)
    bL, _ = _indicator_bound_log(BoxRegion.from_u(L - 1, L + 1, -1, 1, -1, 1), x1, x2, u, spec)
    log_b = np.minimum(log_fl, np.logaddexp(b0, bL))
    # d rho = e^u sinh r dr du dphi
    return np.exp(log_b + u + _log_sinh(r))


def fL_tail_integral(L, fit, spec=HEAT, R=None, r_max=300.0, rel_tol=1e-3, max_evals=300_000):
    """int over r(x) > R of min(fL_tail_bound, M chi_{R_L} + M chi_{R_0} bounds) d rho.

    The shell integral over r in [R, r_max] is adaptive; beyond r_max the shell
    density decays like r^-2 and is extrapolated as shell(r_max) * r_max.
    """
    R = computation_radius(L) if R is None else R
    lr = math.log(r_max / R)

    def F(P, _):
        r = R * np.exp(lr * P[:, 0])
        u = r * (2 * P[:, 1] - 1)
        phi = math.pi * P[:, 2]
        # symmetric in phi -> -phi; factors: dr = r lr ds, du = 2r ds, dphi = pi ds
        return 2.0 * _shell_integrand_fL(L, fit, spec, r, u, phi) * r * lr * 2 * r * math.pi

    cub = AdaptiveCubature(F, 3, [0])
    val, err, ok = cub.run(rel_tol, 1e-300, max_evals)
    # shell density at r_max by a tensor rule in (u, phi)
    gx, gw = gauss_legendre(64)
    us, ps = np.meshgrid(r_max * (2 * gx - 1), math.pi * gx, indexing="ij")
    ww = np.outer(gw, gw) * 2 * r_max * math.pi * 2.0
    shell = float((_shell_integrand_fL(L, fit, spec, np.full(us.size, r_max), us.ravel(), ps.ravel())
                   * ww.ravel()).sum())
    return val + err + shell * r_max


def _atom_grid(f, n=3):
    sb = f.support_box()
    xs = np.linspace(sb.x1lo, sb.x1hi, n)
    ys = np.linspace(sb.x2lo, sb.x2hi, n)
    us = np.linspace(sb.ulo, sb.uhi, n)
    return np.array(list(itertools.product(xs, ys, us)))


def atom_tail_integral(f, center, R, hull, spec=HEAT, r_max=200.0, rel_tol=1e-2, max_evals=60_000):
    """Heuristic bound for the integral of Mf outside the box `hull`, for mean-zero f near c.

    Polar shells around c with r in [R, r_max] are integrated with points inside the
    hull masked out (B(c, R) lies inside it).  Three bounds are combined by min:
    |f|_inf; the sum of |coefficient| times the indicator bound of each box (the hull
    keeps d(x, supp f) >= 1); and the cancellation form
    |f * p_t(x)| <= |f|_1 delta(x) sup_{y in supp f} |p_t(x^{-1} y) - p_t(x^{-1} c)|,
    with the sup over the support replaced by a 3x3x3 grid and sup_t by a log grid.
    Beyond r_max the shell density is extrapolated as decaying like r^-2.
    """
    l1 = f.l1_norm()
    log_sup = math.log(f.sup_norm)
    terms = [(b, abs(c)) for b, c in f if c != 0.0]
    Y = _atom_grid(f)
    # y' = c^{-1} y
    yp1 = (Y[:, 0] - center.x1) / center.a
    yp2 = (Y[:, 1] - center.x2) / center.a
    ypu = Y[:, 2] - center.u
    lr = math.log(r_max / R)
    tgrid = np.exp(np.linspace(math.log(1e-3), math.log(1e2), 40))
    hb = hull.as_u_array()

    def F(P, _):
        r = R * np.exp(lr * P[:, 0])
        w = r * (2 * P[:, 1] - 1)
        phi = 2 * math.pi * P[:, 2]
        z1, z2, _ = _polar_points(r, w, phi)
        # xi = c^{-1} x is the polar point; x = c xi
        x1, x2, u = center.x1 + center.a * z1, center.x2 + center.a * z2, center.u + w
        out = np.zeros(r.shape)
        keep = (x1 < hb[0]) | (x1 > hb[1]) | (x2 < hb[2]) | (x2 > hb[3]) | (u < hb[4]) | (u > hb[5])
        if not keep.any():
            return out
        r, w, z1, z2, x1, x2, u = (v[keep] for v in (r, w, z1, z2, x1, x2, u))
        a = np.exp(w)
        v1 = (yp1[None, :] - z1[:, None]) / a[:, None]
        v2 = (yp2[None, :] - z2[:, None]) / a[:, None]
        vu = ypu[None, :] - w[:, None]
        rv = radius_u(v1, v2, vu)
        r0 = radius_u(-z1 / a, -z2 / a, -w)
        best = np.zeros(r.shape)
        for s in tgrid:
            t = s * r * r
            pv = kernel_ru(spec, t[:, None], rv, vu)
            p0 = kernel_ru(spec, t, r0, -w)
            best = np.maximum(best, np.max(np.abs(pv - p0[:, None]), axis=1))
        # delta(x) = delta(c) delta(xi); values at x are delta(c)-scaled copies at xi
        log_canc = np.log(np.maximum(l1 * best, 1e-300)) - 2 * w - 2 * center.u
        log_ind = np.logaddexp.reduce([math.log(c) + _indicator_bound_log(b, x1, x2, u, spec)[0]
                                       for b, c in terms], axis=0)
        log_m = np.minimum(np.minimum(log_canc, log_ind), log_sup)
        # d rho(x) = e^{u_c} d rho(xi) = e^{u_c} e^w sinh r dr dw dphi
        out[keep] = np.exp(log_m + center.u + w + _log_sinh(r)) * r * lr * 2 * r * 2 * math.pi
        return out

    cub = AdaptiveCubature(F, 3, [0])
    val, err, _ = cub.run(rel_tol, 1e-300, max_evals)
    edge = F(_edge_points(), None)
    return val + err + float(np.mean(edge)) / lr


def _edge_points():
    g = gauss_legendre(32)[0]
    U, P = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([np.ones(U.size), U.ravel(), P.ravel()])


def inner_ball_radius(box, center):
    """Largest R with B(center, R) inside the box."""
    u_room = min(center.u - box.ulo, box.uhi - center.u)
    x_room = min(center.x1 - box.x1lo, box.x1hi - center.x1, center.x2 - box.x2lo, box.x2hi - center.x2)
    # B(c, R) has |x - c_x| <= a_c sinh R
    return float(min(u_room, math.asinh(max(x_room, 0.0) / center.a)))


# ---- the L^1 norm ------------------------------------------------------------

def maximal_l1(f, L_hint=None, s=SupSearchSpec(), q=QuadratureSpec(rel_tol=1e-8), fit=None, spec=HEAT,
               rel_tol=5e-3, max_evals=60_000, center=None, extra=6.0, tail=True, batch=32, power=None):
    """||Mf||_1 over a bounded domain plus a tail bound, reported separately.

    For f = f_L (detected from L_hint) the domain is the symmetric quarter box
    around the computation ball of radius max(10, 1.2 (ln L)^2) and the tail is the
    fitted far-field shape capped by the indicator bounds.  Otherwise the domain is
    the box containing the `extra`-neighbourhood of supp f (reduced by mirror
    symmetries) and the tail is the capped cancellation heuristic around `center`.
    """
    notes = []
    if abs(f.integral()) > 1e-12 * max(f.l1_norm(), 1e-300):
        msg = "f has nonzero integral; ||Mf||_1 diverges logarithmically and only the inner value is finite"
        warnings.warn(msg, DivergenceWarning, stacklevel=2)
        notes.append(msg)
    fl = L_hint is not None and _is_fL(f, L_hint)
    dom = fL_domain(L_hint) if fl else support_domain(f, extra, power)
    tab = dom.arrays()

    def F(P, R):
        x1, x2, u, jac = dom.map(P, R, tab)
        v, _, _ = maximal_many(f, x1, x2, u, spec, s, q)
        return v * jac

    cub = AdaptiveCubature(F, 3, list(range(len(tab))), batch=batch)
    val, err, ok = cub.run(rel_tol, 1e-12, max_evals)
    tail_val, kind = 0.0, TailKind.NONE
    meta = dom.bounds()
    if tail and notes == []:
        if fl:
            if fit is not None and fit.c_fl is not None:
                tail_val = fL_tail_integral(L_hint, fit, spec)
                kind = TailKind.HEURISTIC
        else:
            sb = f.support_box()
            c = center if center is not None else GroupElement(0.5 * (sb.x1lo + sb.x1hi), 0.5 * (sb.x2lo + sb.x2hi),
                                                               math.sqrt(sb.alo * sb.ahi))
            hull = support_hull(f, extra)
            Rin = inner_ball_radius(hull, c)
            meta["tail_radius"] = Rin
            tail_val = atom_tail_integral(f, c, Rin, hull, spec)
            kind = TailKind.HEURISTIC
    return L1Report(val, err, tail_val, kind, cub.evals, len(cub.heap) + len(cub.frozen), ok, meta, notes)


def calibrate_fl_constant(rng, Ls=(math.e**2, math.e**3), n=120, safety=2.0, spec=HEAT,
                          q=QuadratureSpec(rel_tol=1e-9, abs_tol=1e-300)):
    """safety * max of Mf_L / shape over points with r in [(ln L)^2, (ln L)^2 + 6].

    Ratios whose engine error estimate exceeds 10% of the value are dropped.
    Returns (c_fl, table of (L, r, ratio)).
    """
    from .hardy import make_fL
    from .kernels import sample_polar

    rows = []
    for L in Ls:
        r0 = math.log(L) ** 2
        x1, x2, a = sample_polar(rng, n, r0, r0 + 6.0)
        u = np.log(a)
        v, _, err = maximal_many(make_fL(L), x1, x2, u, spec, SupSearchSpec(), q)
        r = radius_u(x1, x2, u)
        shape = np.exp(_fl_shape_log(L, r, u, np.hypot(x1, x2)))
        good = (v > 0) & (err <= 0.1 * v)
        rows += [(L, float(ri), float(vi / si)) for ri, vi, si in zip(r[good], v[good], shape[good])]
    if not rows:
        raise RuntimeError("no usable calibration points")
    return safety * max(t[2] for t in rows), rows
