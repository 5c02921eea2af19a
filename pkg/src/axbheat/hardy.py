"""Calderon-Zygmund sets, atoms, the f_L family and the BMO pairing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .group import GroupElement, distance
from .numerics import QuadratureSpec, adaptive_gl
from .quadrature import BoxRegion, StepFunction, bounding_box, integrate

E2 = math.exp(2.0)
E8 = math.exp(8.0)


def cz_lower(a, r):
    return E2 * a * r if r < 1 else a * math.exp(2 * r)


def cz_upper(a, r):
    return E8 * a * r if r < 1 else a * math.exp(8 * r)


def cz_admissible(center, L, r):
    if L <= 0 or r <= 0:
        raise ValueError("L and r must be positive")
    return cz_lower(center.a, r) <= L < cz_upper(center.a, r)


@dataclass(frozen=True)
class CZSet:
    center: GroupElement
    L: float
    r: float

    @property
    def box(self):
        c = self.center
        h = 0.5 * self.L
        return BoxRegion(c.x1 - h, c.x1 + h, c.x2 - h, c.x2 + h, c.a * math.exp(-self.r), c.a * math.exp(self.r))

    @property
    def measure(self):
        return self.L**2 * 2 * self.r

    @property
    def admissible(self):
        return cz_admissible(self.center, self.L, self.r)

    def translate(self, z):
        c = z * self.center
        return CZSet(c, self.L * z.a, self.r)


def cz_superset(box, r_min=1e-9, eps=1e-9):
    """Canonical admissible CZ set containing the box.

    Centre at the box midpoint (geometric mean in a); r covers the a-range; L covers the
    x-spans and meets the lower bound.  If the upper bound then fails, r grows until the
    span fits under it, and L is recomputed.
    """
    ac = math.sqrt(box.alo * box.ahi)
    center = GroupElement(0.5 * (box.x1lo + box.x1hi), 0.5 * (box.x2lo + box.x2hi), ac)
    r = max(math.log(box.ahi / ac), r_min)
    span = max(box.x1hi - box.x1lo, box.x2hi - box.x2lo)
    for _ in range(100):
        L = max(span, cz_lower(ac, r))
        if L < cz_upper(ac, r):
            return CZSet(center, L, r)
        r_new = span / (E8 * ac) * (1 + eps)
        if r_new >= 1:
            r_new = max(1.0, math.log(span / ac) / 8 * (1 + eps))
        r = max(r_new, r * (1 + eps))
    raise RuntimeError("cz_superset did not converge")  # pragma: no cover


R0_BOX = BoxRegion.from_u(-1.0, 1.0, -1.0, 1.0, -1.0, 1.0)


def dilate(R):
    """Box covering R* = {x : d(x, R) < r}.

    B((y, b), r) lies in |x - y| <= b sinh r, |ln(a / b)| <= r.
    """
    b = R.box
    grow = b.ahi * math.sinh(R.r)
    return BoxRegion(b.x1lo - grow, b.x1hi + grow, b.x2lo - grow, b.x2hi + grow,
                     b.alo * math.exp(-R.r), b.ahi * math.exp(R.r))


def containment_radius(R):
    """max over R of d(center, .), attained at a corner."""
    return max(distance(R.center, c) for c in R.box.corners())


def sample_cz_sets(rng, n, r_lo=1e-3, r_hi=10.0):
    """Latin-hypercube sample over (log r, position of L in its admissible range, centre),
    preceded by the corners of the parameter range (both ends of r, both sides of the
    branch at r = 1, L at either end of its range), where the dilation ratios peak."""
    strata = [(rng.permutation(n) + rng.uniform(size=n)) / n for _ in range(2)]
    out = []
    for r in (r_lo, math.nextafter(1.0, 0.0), 1.0, r_hi):
        for theta in (0.0, 1.0 - 1e-9):
            lo, hi = cz_lower(1.0, r), cz_upper(1.0, r)
            out.append(CZSet(GroupElement(0.0, 0.0, 1.0), lo * (hi / lo) ** theta, r))
    for s_r, theta in zip(*strata):
        r = r_lo * (r_hi / r_lo) ** s_r
        c = GroupElement(rng.uniform(-10, 10), rng.uniform(-10, 10), math.exp(rng.uniform(-3, 3)))
        lo, hi = cz_lower(c.a, r), cz_upper(c.a, r)
        out.append(CZSet(c, lo * (hi / lo) ** theta, r))
    return out


def dilation_stats(R):
    """(rho(covering box of R*) / rho(R), containment radius / r)."""
    return dilate(R).measure / R.measure, containment_radius(R) / R.r


def c0_estimate(rng, n=400):
    """max over sampled CZ sets of the two dilation ratios."""
    return max(max(dilation_stats(R)) for R in sample_cz_sets(rng, n))


# ---- atoms -------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    values: StepFunction
    support: CZSet


def validate_atom(A, rtol=1e-12):
    """Per-condition (passed, slack) for support inclusion, size and cancellation."""
    box = A.support.box
    outside = [b for b, c in A.values if c != 0.0 and not box.contains(b)]
    bound = 1.0 / A.support.measure
    sup = A.values.sup_norm
    mean = A.values.integral()
    l1 = A.values.l1_norm()
    return {
        "support": (not outside, len(outside)),
        "size": (sup <= bound * (1 + rtol), bound - sup),
        "cancellation": (abs(mean) <= 1e-12 * max(l1, 1e-300), abs(mean)),
    }


def atom_ok(A):
    return all(v[0] for v in validate_atom(A).values())


def as_atom(term):
    """(lambda, A) with term = lambda A, using the canonical CZ superset of the support."""
    R = cz_superset(term.support_box())
    lam = term.sup_norm * R.measure
    return lam, Atom(term.scaled(1.0 / lam), R)


class OverlapError(ValueError):
    pass


def make_fL(L):
    """chi_{R_L} - chi_{R_0} with R_L = (L, 0, 1) R_0."""
    if L <= 2:
        raise OverlapError("R_0 and R_L overlap for L <= 2")
    return StepFunction([(BoxRegion.from_u(L - 1.0, L + 1.0, -1.0, 1.0, -1.0, 1.0), 1.0), (R0_BOX, -1.0)])


def simplified(f):
    """Disjoint boxes on the common refinement of f's faces, zero cells dropped."""
    cells, (e1, e2, e3) = f.normalized()
    return StepFunction((BoxRegion(e1[i], e1[i + 1], e2[j], e2[j + 1], e3[k], e3[k + 1]), c)
                        for (i, j, k), c in sorted(cells.items()) if c != 0.0)


def P_box(j):
    s = math.exp(2 * j)
    return BoxRegion(-s, s, -s, s, s * math.exp(-1.0), s * math.e)


def decompose_fL(L):
    """Chain decomposition f_L = sum lambda_j A_j with 2 floor(ln L / 2) + 1 atoms.

    Mass is moved from R_0 up through P_j = (0,0,e^{2j}) R_0 and likewise from R_L
    through Q_j = (L,0,1) P_j, each step a mean-zero difference of normalised
    indicators; the last term bridges P_J and Q_J.
    """
    if L <= 2:
        raise OverlapError("R_0 and R_L overlap for L <= 2")
    J = int(math.floor(math.log(L) / 2 + 1e-12))  # ln(e^{2k}) may round below 2k
    rho0 = R0_BOX.measure
    shift = GroupElement(L, 0.0, 1.0)
    P = [P_box(j) for j in range(J + 1)]
    Q = [p.translate(shift) for p in P]
    terms = []
    for j in range(J):
        terms.append(StepFunction([(P[j], -rho0 / P[j].measure), (P[j + 1], rho0 / P[j + 1].measure)]))
    for j in range(J):
        terms.append(StepFunction([(Q[j], rho0 / Q[j].measure), (Q[j + 1], -rho0 / Q[j + 1].measure)]))
    terms.append(simplified(StepFunction([(Q[J], rho0 / Q[J].measure), (P[J], -rho0 / P[J].measure)])))
    return [as_atom(t) for t in terms]


def reconstruct(decomposition):
    total = StepFunction([])
    for lam, A in decomposition:
        total = total + A.values.scaled(lam)
    return total


def reconstruction_residual(decomposition, f):
    """max |coefficient| of sum lambda_j A_j - f on the common refinement."""
    cells, _ = (reconstruct(decomposition) - f).normalized()
    return max((abs(c) for c in cells.values()), default=0.0)


def coefficient_sum(decomposition):
    return math.fsum(abs(lam) for lam, _ in decomposition)


# ---- BMO side ----------------------------------------------------------------

def g_log(x1, x2, a):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(x1))


def g_trunc(N):
    def g(x1, x2, a):
        return np.clip(g_log(x1, x2, a), -N, N)

    return g


def _box_splits(box):
    return ([0.0] if box.x1lo < 0 < box.x1hi else [], [], [])


def box_integral(g, box, q=QuadratureSpec(rel_tol=1e-10, abs_tol=1e-13, max_subdivisions=20)):
    return integrate(g, box, spec=q, splits=_box_splits(box))


def mean_oscillation(g, R, q=QuadratureSpec(rel_tol=1e-8, abs_tol=1e-11, max_subdivisions=20)):
    """(1/rho(R)) int_R |g - g_R| d rho."""
    box = R.box if isinstance(R, CZSet) else R
    mean = box_integral(g, box, q).value / box.measure

    def dev(x1, x2, a):
        return np.abs(g(x1, x2, a) - mean)

    return box_integral(dev, box, q).value / box.measure


def oscillation_1d(h, lo, hi, spec=QuadratureSpec(rel_tol=1e-10, abs_tol=1e-13, max_subdivisions=40)):
    """(1/|I|) int_I |h - h_I| over I = [lo, hi], h vectorised (log singularities at 0 allowed)."""
    bps = (0.0,) if lo < 0 < hi else ()
    m, _, _ = adaptive_gl(h, lo, hi, spec, breakpoints=bps)
    m /= hi - lo
    # |h - m| has a kink where h = m; for h = ln|s| that is at s = +-e^m
    bps2 = bps + tuple(p for p in (math.exp(m), -math.exp(m)) if lo < p < hi)
    v, _, _ = adaptive_gl(lambda s: np.abs(h(s) - m), lo, hi, spec, breakpoints=bps2)
    return v / (hi - lo)


def log_abs(s):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(s))


def pairing_with_error(g, f, q=QuadratureSpec(rel_tol=1e-11, abs_tol=1e-13, max_subdivisions=20)):
    """(int g f d rho, error estimate) for a step function f, box by box."""
    certs = [(c, box_integral(g, b, q)) for b, c in f]
    return math.fsum(c * k.value for c, k in certs), math.fsum(abs(c) * k.error for c, k in certs)


def pairing(g, f, q=QuadratureSpec(rel_tol=1e-11, abs_tol=1e-13, max_subdivisions=20)):
    """int g f d rho for a step function f, box by box."""
    return pairing_with_error(g, f, q)[0]


def phi_closed_form(L):
    return 4 * ((L + 1) * math.log(L + 1) - (L - 1) * math.log(L - 1) - 2) + 8


# ---- the H^1 counterexample -------------------------------------------------

def _log_integral(v_lo, v_hi, power, with_error=False):
    """int_{v_lo}^{v_hi} v^{-power} dv; for v_hi = inf (power > 1) in w = (v_lo / v)^{power - 1}."""
    spec = QuadratureSpec(rel_tol=1e-14, abs_tol=1e-16)
    if math.isinf(v_hi):
        p1 = power - 1.0
        # dv = -(v_lo / p1) w^{-1/p1 - 1} dw and v^{-power} = v_lo^{-power} w^{power/p1}
        val, err, _ = adaptive_gl(lambda w: v_lo ** (1 - power) / p1 * w ** ((power - 1 - p1) / p1), 0.0, 1.0, spec)
    else:
        val, err, _ = adaptive_gl(lambda v: v ** (-power), v_lo, v_hi, spec)
    return (val, err) if with_error else val


def f_counter(x1, x2, a):
    """1/(x1 (ln x1)^{3/2}) on {x1 > 3, |x2| < 1, 1/e < a < e} plus c0 on R_0."""
    x1, x2, a = (np.asarray(v, dtype=float) for v in (x1, x2, a))
    strip = (np.abs(x2) < 1) & (a > 1 / math.e) & (a < math.e)
    with np.errstate(divide="ignore", invalid="ignore"):
        main = np.where((x1 > 3) & strip, 1.0 / (x1 * np.log(np.maximum(x1, 3.0)) ** 1.5), 0.0)
    base = np.where((np.abs(x1) < 1) & strip, counter_c0(), 0.0)
    return main + base


def counter_c0():
    """c0 = -(1/rho(R_0)) int_{x1 > 3} f d rho; the x1-integral is done in v = ln x1."""
    mass = 4.0 * _log_integral(math.log(3.0), math.inf, 1.5)
    return -mass / R0_BOX.measure


def pairing_gN_counter(N, with_error=False):
    """int g_N f d rho for the counterexample f, with g_N = clamp(ln|x1|, -N, N).

    On x1 > 3 the x1-integral in v = ln x1 is int_{ln 3}^N v^{-1/2} + N int_N^inf v^{-3/2};
    on R_0 the factor is int_{-1}^{1} max(ln|s|, -N) ds, done by 1D quadrature.
    Both infinite ranges are mapped to finite ones, so there is no truncation tail.
    """
    v0 = math.log(3.0)
    strip = 4.0  # |x2| < 1 and |u| < 1
    if N > v0:
        (m1, e1), (m2, e2) = _log_integral(v0, N, 0.5, True), _log_integral(N, math.inf, 1.5, True)
        main, main_err = strip * (m1 + N * m2), strip * (e1 + N * e2)
    else:
        m2, e2 = _log_integral(v0, math.inf, 1.5, True)
        main, main_err = strip * N * m2, strip * N * e2
    inner, ierr, _ = adaptive_gl(lambda s: np.maximum(np.log(s), -N), 0.0, 1.0,
                                 QuadratureSpec(rel_tol=1e-13, abs_tol=1e-15, max_subdivisions=60),
                                 breakpoints=(math.exp(-N),))
    c0 = counter_c0()
    val = main + c0 * strip * 2 * inner
    return (val, main_err + abs(c0) * strip * 2 * ierr) if with_error else val


def counter_ck(k):
    """rho-mean of f over R_{2k} = (2k, 0, 1) R_0."""
    return 4.0 * _log_integral(math.log(2 * k - 1), math.log(2 * k + 1), 1.5) / R0_BOX.measure


def counter_ck_closed(k):
    return 1.0 / math.sqrt(math.log(2 * k - 1)) - 1.0 / math.sqrt(math.log(2 * k + 1))


def f_tilde(K):
    """sum_{k=2}^K c_k f_{2k}."""
    terms = []
    for k in range(2, K + 1):
        terms += [(b, counter_ck(k) * c) for b, c in make_fL(2.0 * k)]
    return simplified(StepFunction(terms))


def _f1d(s):
    return 1.0 / (s * np.log(s) ** 1.5)


def residual_sup(k):
    """sup over R_{2k} of |f - c_k|; f is monotone in x1, so it is attained at an end."""
    ck = counter_ck(k)
    return max(abs(_f1d(2 * k - 1.0) - ck), abs(_f1d(2 * k + 1.0) - ck))


def residual_atom(k, cells=64):
    """(lambda, A): the residual (f - c_k) chi_{R_2k} replaced by its x1-cell means, as lambda A.

    The cell means are exact integrals, so the mean stays zero up to rounding.
    """
    lo = 2 * k - 1.0
    edges = np.linspace(lo, lo + 2.0, cells + 1)
    ck = counter_ck(k)
    terms = []
    for a, b in zip(edges[:-1], edges[1:]):
        m = _log_integral(math.log(a), math.log(b), 1.5) / (b - a) - ck
        terms.append((BoxRegion.from_u(a, b, -1.0, 1.0, -1.0, 1.0), m))
    step = StepFunction(terms)
    # remove the rounding residue of the mean by a constant shift
    step = StepFunction((bx, c - step.integral() / (R0_BOX.measure)) for bx, c in step)
    return as_atom(step)


def residual_check(k, C_hat=None):
    """sup|f - c_k| <= C_hat / k^2 on R_{2k}, and the cell-mean residual is lambda times an atom."""
    C_hat = 4.0 * residual_sup(2) if C_hat is None else C_hat
    s = residual_sup(k)
    lam, A = residual_atom(k)
    rep = validate_atom(A)
    return {"k": k, "sup": s, "bound": C_hat / k**2, "sup_ok": s <= C_hat / k**2,
            "lambda": lam, "atom_ok": all(v[0] for v in rep.values())}


def cauchy_tail_bound(k):
    """Bound for sum_{j > k} c_j ln ln(2j).

    By the mean value theorem c_j <= h(j) / ln ln(2j) with
    h(j) = ln ln(2j) / ((2j - 1) ln(2j - 1)^{3/2}), which decreases, so the tail is at
    most int_k^inf h.  With v = ln(2s - 1) = v0 / sigma^2 the integral becomes
    v0^{-1/2} int_0^1 ln ln(e^v + 1) d sigma, which is done by quadrature.
    """
    v0 = math.log(2 * k - 1.0)

    def g(sig):
        v = v0 / np.maximum(sig, 1e-300) ** 2
        return np.log(v + np.log1p(np.exp(-v)))

    val, _, _ = adaptive_gl(g, 0.0, 1.0, QuadratureSpec(rel_tol=1e-10, max_subdivisions=40))
    return val / math.sqrt(v0)


def cauchy_increments(k_lo, k_hi):
    """Partial-sum increments c_k ln ln 2k for k in [k_lo, k_hi]."""
    ks = np.arange(k_lo, k_hi + 1)
    ck = 1.0 / np.sqrt(np.log(2 * ks - 1.0)) - 1.0 / np.sqrt(np.log(2 * ks + 1.0))
    return ck * np.log(np.log(2.0 * ks))


def counterexample_suite():
    return {"f": f_counter, "c0": counter_c0(), "g_N": g_trunc, "f_tilde": f_tilde,
            "residual_check": residual_check}


def random_atom(rng, r0, spread=0.25):
    """Seeded two-box atom on an admissible CZ set centred at e with log-radius r0.

    L is drawn log-uniformly from the lowest `spread` fraction of the admissible
    range.  The support is cut across u at a uniform fraction in [1/4, 3/4], or across
    x1 at its middle (x2 is equivalent to x1 by rotation).  The two values have a random
    sign, cancel against the box measures, and the larger one is 1 / rho(R).  Both
    shapes are mirror (anti)symmetric in x1 and x2, which halves the work twice.
    """
    lo, hi = cz_lower(1.0, r0), cz_upper(1.0, r0)
    L = lo * (hi / lo) ** (spread * rng.uniform())
    R = CZSet(GroupElement(0.0, 0.0, 1.0), L, r0)
    b = R.box
    axis = int(rng.integers(2))
    frac = 0.5 if axis == 0 else rng.uniform(0.25, 0.75)
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    if axis == 0:
        cut = 0.5 * (b.x1lo + b.x1hi)
        boxes = [BoxRegion.from_u(b.x1lo, cut, b.x2lo, b.x2hi, b.ulo, b.uhi),
                 BoxRegion.from_u(cut, b.x1hi, b.x2lo, b.x2hi, b.ulo, b.uhi)]
    else:
        cut = b.ulo + frac * (b.uhi - b.ulo)
        boxes = [BoxRegion.from_u(b.x1lo, b.x1hi, b.x2lo, b.x2hi, b.ulo, cut),
                 BoxRegion.from_u(b.x1lo, b.x1hi, b.x2lo, b.x2hi, cut, b.uhi)]
    w = np.array([bx.measure for bx in boxes])
    v = sign * np.array([w[1], -w[0]])
    v = v / (np.max(np.abs(v)) * R.measure)
    return Atom(StepFunction(zip(boxes, v.tolist())), R)
